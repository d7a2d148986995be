#include "dialsynth/dataset.hpp"

#include <sstream>
#include <unordered_set>

namespace dialsynth {

namespace {

struct Partial {
    std::size_t turns = 0;
    std::map<std::size_t, std::size_t> turn_histogram;
    std::map<std::size_t, std::size_t> slots_per_turn;
    std::map<std::string, std::size_t> transitions;
    std::vector<std::string> user_utterances;
    std::map<std::string, std::map<std::string, std::size_t>> slot_values;
};

void merge_into(StatsReport& r, std::unordered_set<std::string>& users, Partial&& p)
{
    r.turn_count += p.turns;
    for (const auto& [k, v] : p.turn_histogram) r.turn_histogram[k] += v;
    for (const auto& [k, v] : p.slots_per_turn) r.slots_per_turn[k] += v;
    for (const auto& [k, v] : p.transitions) r.transition_counts[k] += v;
    for (auto& u : p.user_utterances) users.insert(std::move(u));
    for (const auto& [slot, vals] : p.slot_values)
        for (const auto& [v, n] : vals) r.slot_values[slot][v] += n;
}

}  // namespace

std::size_t StatsReport::transitions_covered() const
{
    std::size_t n = 0;
    for (const auto& [id, c] : transition_counts)
        if (c > 0) ++n;
    return n;
}

nlohmann::ordered_json StatsReport::to_json() const
{
    nlohmann::ordered_json j;
    j["dialogues"] = dialogue_count;
    j["turns"] = turn_count;
    auto hist = [](const std::map<std::size_t, std::size_t>& h) {
        nlohmann::ordered_json o = nlohmann::ordered_json::object();
        for (const auto& [k, v] : h) o[std::to_string(k)] = v;
        return o;
    };
    j["turns_per_dialogue"] = hist(turn_histogram);
    j["slots_per_turn"] = hist(slots_per_turn);
    j["transitions"] = transition_counts;
    j["transitions_covered"] = transitions_covered();
    j["distinct_user_utterances"] = distinct_user_utterances;
    j["slot_values"] = slot_values;
    return j;
}

std::string StatsReport::summary() const
{
    std::ostringstream os;
    os << "dialogues: " << dialogue_count << '\n';
    os << "turns: " << turn_count << '\n';
    if (dialogue_count)
        os << "mean turns per dialogue: " << static_cast<double>(turn_count) / static_cast<double>(dialogue_count)
           << '\n';
    os << "turns per dialogue:";
    for (const auto& [k, v] : turn_histogram) os << ' ' << k << ':' << v;
    os << '\n';
    os << "slots per turn:";
    for (const auto& [k, v] : slots_per_turn) os << ' ' << k << ':' << v;
    os << '\n';
    os << "transitions covered: " << transitions_covered() << '/' << transition_counts.size() << '\n';
    for (const auto& [id, c] : transition_counts)
        if (c == 0) os << "  unused: " << id << '\n';
    os << "distinct user utterances: " << distinct_user_utterances << '\n';
    std::size_t values = 0;
    for (const auto& [s, vals] : slot_values) values += vals.size();
    os << "distinct slot values: " << values << " over " << slot_values.size() << " slots\n";
    return os.str();
}

StatsReport compute_stats(const DialogueCorpus& c, const DialogueModel& model, ExecPolicy policy)
{
    constexpr std::size_t kChunk = 256;
    const std::size_t n = c.dialogues.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<Partial> parts(chunks);
    for_each_index(chunks, policy, [&](std::size_t ci) {
        Partial& p = parts[ci];
        for (std::size_t i = ci * kChunk; i < std::min(n, (ci + 1) * kChunk); ++i) {
            const Dialogue& d = c.dialogues[i];
            p.turns += d.turns.size();
            ++p.turn_histogram[d.turns.size()];
            for (const auto& t : d.turns) {
                ++p.slots_per_turn[t.end_state.slots.size()];
                if (t.provenance) ++p.transitions[t.provenance->transition_id];
                p.user_utterances.push_back(t.user_utterance);
                for (const auto& [slot, v] : t.end_state.slots)
                    if (v.is_value()) ++p.slot_values[slot][v.text];
            }
        }
    });
    StatsReport r;
    r.dialogue_count = n;
    for (const auto& t : model.transitions()) r.transition_counts[t.id] = 0;
    std::unordered_set<std::string> users;
    for (auto& p : parts) merge_into(r, users, std::move(p));
    r.distinct_user_utterances = users.size();
    return r;
}

std::vector<std::pair<std::string, std::string>> uncovered_categorical_values(const StatsReport& r,
                                                                              const Ontology& ont,
                                                                              std::string_view domain)
{
    std::vector<std::pair<std::string, std::string>> out;
    const DomainDef& dom = ont.domain(domain);
    for (const auto& s : dom.slots) {
        if (s.kind != SlotKind::categorical) continue;
        auto plain = r.slot_values.find(s.name);
        auto qual = r.slot_values.find(qualify_slot(domain, s.name));
        for (const auto& v : s.values) {
            bool seen = (plain != r.slot_values.end() && plain->second.count(v)) ||
                        (qual != r.slot_values.end() && qual->second.count(v));
            if (!seen) out.push_back({s.name, v});
        }
    }
    return out;
}

}  // namespace dialsynth

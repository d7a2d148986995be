#include "dialsynth/adapt.hpp"

#include <fstream>
#include <set>

namespace dialsynth {

using nlohmann::json;

DomainMapping load_mapping(const json& doc)
{
    if (!doc.is_object()) throw FormatError("mapping: document must be a JSON object");
    DomainMapping m;
    try {
        m.source = doc.at("source").get<std::string>();
        m.target = doc.at("target").get<std::string>();
        for (const auto& [k, v] : doc.at("slot_map").items()) m.slot_map[k] = v.get<std::string>();
        std::string policy = doc.value("value_policy", std::string("resample_from_target"));
        if (policy == "resample_from_target")
            m.value_policy = ValuePolicy::resample_from_target;
        else if (policy == "identity_if_shared")
            m.value_policy = ValuePolicy::identity_if_shared;
        else
            throw Error("mapping: unknown value_policy \"" + policy + "\"");
    } catch (const json::exception& e) {
        throw FormatError(std::string("mapping: ") + e.what());
    }
    return m;
}

DomainMapping load_mapping_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open mapping file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return load_mapping(doc);
}

void check_mapping(const DomainMapping& m, const Ontology& ont)
{
    const DomainDef& src = ont.domain(m.source);
    const DomainDef& dst = ont.domain(m.target);
    std::set<std::string> targets;
    for (const auto& [s, t] : m.slot_map) {
        if (!src.find_slot(s)) throw Error("mapping: slot \"" + s + "\" is not in domain \"" + m.source + "\"");
        if (!dst.find_slot(t)) throw Error("mapping: slot \"" + t + "\" is not in domain \"" + m.target + "\"");
        if (!targets.insert(t).second) throw Error("mapping: slot \"" + t + "\" is the target of two source slots");
    }
}

namespace {

std::string capitalize(std::string s)
{
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

struct Skip {
    std::string reason;
};

}  // namespace

AdaptResult adapt_dialogue(const Dialogue& d, const DomainMapping& m, const Ontology& ont, uint64_t seed)
{
    check_mapping(m, ont);
    if (d.domain != m.source)
        throw Error("dialogue " + d.id + " is in domain \"" + d.domain + "\", the mapping expects \"" + m.source + "\"");
    const DomainDef& src = ont.domain(m.source);
    const DomainDef& dst = ont.domain(m.target);

    try {
        // Every annotated slot must be mapped.
        for (const auto& t : d.turns)
            for (const auto& [name, v] : t.end_state.slots)
                if (!m.slot_map.count(name)) throw Skip{"unmapped slot: " + name};

        // Consistent value map, keyed by source text.
        std::map<std::string, std::string> value_map;
        Rng rng(seed);
        for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
            const Turn& t = d.turns[ti];
            for (const auto& [name, v] : t.end_state.slots) {
                if (!v.is_value()) continue;
                const SlotDef* target_slot = dst.find_slot(m.slot_map.at(name));
                const auto& pool = target_slot->values;
                auto known = value_map.find(v.text);
                if (known != value_map.end()) {
                    bool fits = target_slot->kind != SlotKind::categorical ||
                                std::find(pool.begin(), pool.end(), known->second) != pool.end();
                    if (!fits) throw Skip{"conflicting value mapping for \"" + v.text + "\""};
                    continue;
                }
                std::string mapped;
                if (m.value_policy == ValuePolicy::identity_if_shared &&
                    std::find(pool.begin(), pool.end(), v.text) != pool.end()) {
                    mapped = v.text;
                } else {
                    if (pool.empty()) throw Skip{"no target values for slot " + target_slot->name};
                    mapped = pool[static_cast<std::size_t>(rng.below(pool.size()))];
                }
                // First sight of the value: this turn introduced it, so a
                // substituted value must be found in the turn's text.
                if (mapped != v.text) {
                    if (!contains_word(t.agent_utterance, v.text) && !contains_word(t.user_utterance, v.text))
                        throw Skip{"value \"" + v.text + "\" of slot " + name + " not found in turn " +
                                   std::to_string(ti)};
                }
                value_map.emplace(v.text, std::move(mapped));
            }
        }

        std::vector<std::pair<std::string, std::string>> replacements;
        if (!dst.subjects.empty()) {
            for (std::size_t i = 0; i < src.subjects.size(); ++i) {
                const std::string& to = dst.subjects[i % dst.subjects.size()];
                replacements.push_back({src.subjects[i], to});
                if (capitalize(src.subjects[i]) != src.subjects[i])
                    replacements.push_back({capitalize(src.subjects[i]), capitalize(to)});
            }
        }
        for (const auto& [from, to] : value_map)
            if (from != to) replacements.push_back({from, to});

        auto map_slots = [&](const SlotSet& s) -> std::optional<SlotSet> {
            SlotSet out;
            for (const auto& [name, v] : s) {
                auto sm = m.slot_map.find(name);
                if (sm == m.slot_map.end()) return std::nullopt;
                SlotValue nv = v;
                if (v.is_value()) {
                    auto vm = value_map.find(v.text);
                    if (vm != value_map.end()) nv.text = vm->second;
                }
                out.set(sm->second, nv);
            }
            return out;
        };

        Dialogue out;
        out.id = d.id;
        out.domain = m.target;
        if (d.initial_state) {
            auto s = map_slots(d.initial_state->slots);
            if (!s) throw Skip{"unmapped slot in the initial state"};
            out.initial_state = ConcreteState{d.initial_state->abstract, m.target, std::move(*s)};
        }
        for (const auto& t : d.turns) {
            Turn nt;
            nt.agent_utterance = fix_articles(replace_words(t.agent_utterance, replacements));
            nt.user_utterance = fix_articles(replace_words(t.user_utterance, replacements));
            nt.end_state = ConcreteState{t.end_state.abstract, m.target, *map_slots(t.end_state.slots)};
            if (t.provenance) {
                Provenance p{t.provenance->transition_id, t.provenance->template_id, {}};
                bool keep = true;
                for (const auto& [cname, val] : t.provenance->captures) {
                    SemValue nv = val;
                    if (val.is_slots()) {
                        auto s = map_slots(val.slots);
                        if (!s) {
                            keep = false;
                            break;
                        }
                        nv.slots = std::move(*s);
                    } else if (val.kind == ValueKind::scalar) {
                        auto vm = value_map.find(val.scalar);
                        if (vm != value_map.end()) nv.scalar = vm->second;
                    }
                    p.captures.emplace(cname, std::move(nv));
                }
                if (keep) nt.provenance = std::move(p);
            }
            out.turns.push_back(std::move(nt));
        }
        return {std::move(out), {}};
    } catch (const Skip& s) {
        return {std::nullopt, s.reason};
    }
}

std::vector<AdaptResult> adapt_corpus(const std::vector<Dialogue>& ds, const DomainMapping& m, const Ontology& ont,
                                      uint64_t seed, ExecPolicy policy)
{
    check_mapping(m, ont);
    std::vector<AdaptResult> out(ds.size());
    for_each_index(ds.size(), policy, [&](std::size_t i) { out[i] = adapt_dialogue(ds[i], m, ont, mix_seed(seed, i)); });
    return out;
}

Dialogue concat_multi_domain(const Dialogue& d1, const Dialogue& d2, const DialogueModel& model)
{
    static const std::string kClose = "CloseConversation";
    if (!model.find_state(kClose)) throw Error("model has no CloseConversation state");
    if (d1.turns.empty() || d2.turns.empty()) throw Error("cannot splice an empty dialogue");
    const std::string dom1 = d1.turns.front().end_state.domain.empty() ? d1.domain : d1.turns.back().end_state.domain;
    const std::string dom2 = d2.domain;
    if (!d2.splices.empty()) throw Error("the second dialogue must be single-domain");
    if (dom1 == dom2 || d1.domain == d2.domain) throw Error("cannot splice two dialogues of domain \"" + dom2 + "\"");
    for (const auto& t : d1.turns)
        if (t.end_state.domain == dom2) throw Error("first dialogue already covers domain \"" + dom2 + "\"");

    std::size_t close = d1.turns.size();
    for (std::size_t i = 0; i < d1.turns.size(); ++i)
        if (d1.turns[i].end_state.abstract == kClose) {
            close = i;
            break;
        }
    if (close == d1.turns.size()) throw Error("dialogue " + d1.id + " has no CloseConversation turn");
    if (d2.turns.size() < 2) throw Error("dialogue " + d2.id + " has no turns after its first");

    Dialogue out;
    out.id = d1.id + "+" + d2.id;
    out.domain = d1.domain + "+" + d2.domain;
    out.initial_state = d1.initial_state;
    for (const auto& s : d1.splices)
        if (s.turn_index <= close) out.splices.push_back(s);
    for (std::size_t i = 0; i <= close; ++i) {
        Turn t = d1.turns[i];
        t.end_state.slots = qualified_slots(t.end_state);
        out.turns.push_back(std::move(t));
    }
    const SlotSet carried = out.turns.back().end_state.slots;
    out.splices.push_back({out.turns.size(), d2.turns.front().end_state.abstract,
                           project_slots(d2.turns.front().end_state, dom2)});
    for (std::size_t i = 1; i < d2.turns.size(); ++i) {
        Turn t = d2.turns[i];
        SlotSet slots = carried;
        slots.merge(qualified_slots(t.end_state));
        t.end_state.slots = std::move(slots);
        out.turns.push_back(std::move(t));
    }
    return out;
}

std::optional<std::size_t> find_close_turn_by_text(const Dialogue& d, const std::vector<std::string>& phrases)
{
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        std::string agent = to_lower(d.turns[i].agent_utterance);
        for (const auto& p : phrases)
            if (contains_word(agent, to_lower(p))) return i == 0 ? std::optional<std::size_t>{} : i - 1;
    }
    return std::nullopt;
}

}  // namespace dialsynth

#include "dialsynth/dataset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace dialsynth {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string req_str(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw FormatError(std::string("missing string field \"") + key + "\"");
    return it->get<std::string>();
}

}  // namespace

ordered_json slots_to_json(const SlotSet& s)
{
    ordered_json out = ordered_json::object();
    for (const auto& [name, v] : s) {
        switch (v.kind) {
        case SlotValueKind::value: out[name] = {{"t", "v"}, {"v", v.text}}; break;
        case SlotValueKind::dontcare: out[name] = {{"t", "dontcare"}}; break;
        case SlotValueKind::requested: out[name] = {{"t", "?"}}; break;
        }
    }
    return out;
}

SlotSet slots_from_json(const json& j)
{
    if (!j.is_object()) throw FormatError("slots must be an object");
    SlotSet out;
    for (const auto& [name, v] : j.items()) {
        if (!v.is_object()) throw FormatError("slot \"" + name + "\" must be an object");
        std::string t = req_str(v, "t");
        if (t == "v") {
            std::string text = req_str(v, "v");
            if (text.empty()) throw FormatError("slot \"" + name + "\" has an empty value");
            out.set(name, SlotValue::of(std::move(text)));
        } else if (t == "dontcare") {
            out.set(name, SlotValue::dontcare());
        } else if (t == "?") {
            out.set(name, SlotValue::requested());
        } else {
            throw FormatError("slot \"" + name + "\" has unknown tag \"" + t + "\"");
        }
    }
    return out;
}

ordered_json semvalue_to_json(const SemValue& v)
{
    switch (v.kind) {
    case ValueKind::scalar: return {{"kind", "scalar"}, {"value", v.scalar}};
    case ValueKind::slot_pair: return {{"kind", "pair"}, {"slots", slots_to_json(v.slots)}};
    case ValueKind::slot_set: return {{"kind", "set"}, {"slots", slots_to_json(v.slots)}};
    case ValueKind::state: break;
    }
    throw Error("cannot serialize a state-valued capture");
}

SemValue semvalue_from_json(const json& j)
{
    if (!j.is_object()) throw FormatError("capture must be an object");
    std::string kind = req_str(j, "kind");
    if (kind == "scalar") return SemValue::make_scalar(req_str(j, "value"));
    if (kind == "pair" || kind == "set") {
        SemValue v = SemValue::make_set(slots_from_json(j.at("slots")));
        if (kind == "pair") {
            if (v.slots.size() != 1) throw FormatError("pair capture must hold exactly one slot");
            v.kind = ValueKind::slot_pair;
        }
        return v;
    }
    throw FormatError("unknown capture kind \"" + kind + "\"");
}

ordered_json dialogue_to_json(const Dialogue& d)
{
    ordered_json out;
    out["id"] = d.id;
    out["domain"] = d.domain;
    if (d.initial_state)
        out["start"] = {{"abstract", d.initial_state->abstract},
                        {"domain", d.initial_state->domain},
                        {"slots", slots_to_json(d.initial_state->slots)}};
    ordered_json turns = ordered_json::array();
    for (const auto& t : d.turns) {
        ordered_json tj;
        tj["agent"] = t.agent_utterance;
        tj["user"] = t.user_utterance;
        ordered_json st;
        st["abstract"] = t.end_state.abstract;
        if (t.end_state.domain != d.domain) st["domain"] = t.end_state.domain;
        st["slots"] = slots_to_json(t.end_state.slots);
        tj["state"] = std::move(st);
        if (t.provenance) {
            ordered_json caps = ordered_json::object();
            for (const auto& [name, v] : t.provenance->captures) caps[name] = semvalue_to_json(v);
            tj["prov"] = {{"transition", t.provenance->transition_id},
                          {"template", t.provenance->template_id},
                          {"captures", std::move(caps)}};
        }
        turns.push_back(std::move(tj));
    }
    out["turns"] = std::move(turns);
    if (!d.splices.empty()) {
        ordered_json sp = ordered_json::array();
        for (const auto& s : d.splices)
            sp.push_back({{"turn", s.turn_index}, {"resume", s.resume_abstract}, {"slots", slots_to_json(s.resume_slots)}});
        out["splices"] = std::move(sp);
    }
    return out;
}

Dialogue dialogue_from_json(const json& j)
{
    if (!j.is_object()) throw FormatError("dialogue must be a JSON object");
    Dialogue d;
    d.id = req_str(j, "id");
    d.domain = req_str(j, "domain");
    if (j.contains("start")) {
        const json& s = j["start"];
        d.initial_state = ConcreteState{req_str(s, "abstract"), s.value("domain", d.domain), slots_from_json(s.at("slots"))};
    }
    auto tit = j.find("turns");
    if (tit == j.end() || !tit->is_array()) throw FormatError("missing array \"turns\"");
    for (const auto& tj : *tit) {
        if (!tj.is_object()) throw FormatError("turn must be an object");
        Turn t;
        t.agent_utterance = req_str(tj, "agent");
        t.user_utterance = req_str(tj, "user");
        auto sit = tj.find("state");
        if (sit == tj.end() || !sit->is_object()) throw FormatError("turn is missing \"state\"");
        t.end_state.abstract = req_str(*sit, "abstract");
        t.end_state.domain = sit->contains("domain") ? req_str(*sit, "domain") : d.domain;
        t.end_state.slots = slots_from_json(sit->value("slots", json::object()));
        if (tj.contains("prov")) {
            const json& p = tj["prov"];
            Provenance prov{req_str(p, "transition"), req_str(p, "template"), {}};
            const json caps = p.value("captures", json::object());
            if (!caps.is_object()) throw FormatError("captures must be an object");
            for (const auto& [name, v] : caps.items()) prov.captures.emplace(name, semvalue_from_json(v));
            t.provenance = std::move(prov);
        }
        d.turns.push_back(std::move(t));
    }
    if (j.contains("splices")) {
        for (const auto& s : j["splices"]) {
            if (!s.contains("turn") || !s["turn"].is_number_unsigned()) throw FormatError("splice needs a turn index");
            d.splices.push_back({s["turn"].get<std::size_t>(), req_str(s, "resume"),
                                 slots_from_json(s.value("slots", json::object()))});
        }
    }
    return d;
}

void emit_native(const DialogueCorpus& c, std::ostream& out)
{
    for (const auto& d : c.dialogues) out << dialogue_to_json(d).dump() << '\n';
    if (!out) throw Error("write failure while emitting the corpus");
}

std::vector<Dialogue> parse_native(std::istream& in, const std::string& source)
{
    std::vector<Dialogue> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(dialogue_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

DialogueCorpus read_native_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file " + path);
    DialogueCorpus c;
    c.dialogues = parse_native(in, path);
    return c;
}

void write_native_file(const DialogueCorpus& c, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    emit_native(c, out);
}

// ---------------------------------------------------------------------------

BeliefState belief_state(const ConcreteState& s)
{
    BeliefState out;
    for (const auto& [name, v] : s.slots) {
        auto dash = name.find('-');
        if (dash == std::string::npos)
            out[s.domain][name] = v.display();
        else
            out[name.substr(0, dash)][name.substr(dash + 1)] = v.display();
    }
    return out;
}

void emit_multiwoz(const DialogueCorpus& c, std::ostream& out)
{
    ordered_json doc = ordered_json::object();
    for (const auto& d : c.dialogues) {
        ordered_json log = ordered_json::array();
        std::set<std::string> domains;
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            log.push_back({{"text", d.turns[i].user_utterance}, {"metadata", ordered_json::object()}});
            BeliefState bs = belief_state(d.turns[i].end_state);
            ordered_json meta = ordered_json::object();
            ordered_json flat = ordered_json::object();
            for (const auto& [dom, slots] : bs) {
                domains.insert(dom);
                for (const auto& [slot, v] : slots) {
                    meta[dom][slot] = v;
                    flat[dom + "-" + slot] = v;
                }
            }
            std::string next_agent = i + 1 < d.turns.size() ? d.turns[i + 1].agent_utterance : std::string();
            log.push_back({{"text", next_agent}, {"metadata", std::move(meta)}, {"belief_state", std::move(flat)}});
        }
        if (domains.empty()) {
            for (const auto& t : d.turns) domains.insert(t.end_state.domain);
        }
        doc[d.id] = {{"domains", std::vector<std::string>(domains.begin(), domains.end())},
                     {"greeting", d.turns.empty() ? std::string() : d.turns.front().agent_utterance},
                     {"log", std::move(log)}};
    }
    out << doc.dump(1) << '\n';
    if (!out) throw Error("write failure while emitting the MultiWOZ document");
}

std::vector<MultiwozDialogue> parse_multiwoz(std::istream& in)
{
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
        throw FormatError(std::string("MultiWOZ document: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("MultiWOZ document must be an object keyed by dialogue id");
    std::vector<MultiwozDialogue> out;
    for (const auto& [id, dj] : doc.items()) {
        MultiwozDialogue md;
        md.id = id;
        if (!dj.is_object() || !dj.contains("log") || !dj["log"].is_array())
            throw FormatError("dialogue " + id + " has no log");
        const auto& log = dj["log"];
        for (std::size_t i = 0; i < log.size(); ++i) {
            const auto& e = log[i];
            std::string text = e.value("text", std::string());
            if (i % 2 == 0) {
                md.user.push_back(std::move(text));
                continue;
            }
            md.system.push_back(std::move(text));
            BeliefState bs;
            const ordered_json meta = e.value("metadata", ordered_json::object());
            for (const auto& [dom, slots] : meta.items())
                for (const auto& [slot, v] : slots.items()) bs[dom][slot] = v.get<std::string>();
            md.states.push_back(std::move(bs));
        }
        out.push_back(std::move(md));
    }
    return out;
}

// ---------------------------------------------------------------------------

DialogueCorpus sample_corpus(const DialogueCorpus& c, double fraction, uint64_t seed)
{
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("sample fraction must be in (0, 1]");
    const std::size_t n = c.dialogues.size();
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    Rng rng(seed);
    DialogueCorpus out;
    out.metadata = c.metadata;
    for (std::size_t i : sample_indices(n, std::min(k, n), rng)) out.dialogues.push_back(c.dialogues[i]);
    out.metadata["sample"] = {{"fraction", fraction}, {"seed", seed}, {"from", n}, {"kept", out.dialogues.size()}};
    return out;
}

DialogueCorpus mix(const std::vector<MixPart>& parts)
{
    DialogueCorpus out;
    ordered_json meta = ordered_json::array();
    std::set<std::string> ids;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (!parts[p].corpus) throw Error("mix part " + std::to_string(p) + " has no corpus");
        DialogueCorpus s = sample_corpus(*parts[p].corpus, parts[p].fraction, parts[p].seed);
        std::size_t renamed = 0;
        for (auto& d : s.dialogues) {
            if (ids.count(d.id)) {
                d.id = "p" + std::to_string(p) + "-" + d.id;
                ++renamed;
            }
            ids.insert(d.id);
            out.dialogues.push_back(std::move(d));
        }
        meta.push_back({{"label", parts[p].label},
                        {"fraction", parts[p].fraction},
                        {"seed", parts[p].seed},
                        {"from", parts[p].corpus->dialogues.size()},
                        {"kept", s.dialogues.size()},
                        {"renamed", renamed},
                        {"metadata", parts[p].corpus->metadata}});
    }
    out.metadata["parts"] = std::move(meta);
    out.metadata["dialogues"] = out.dialogues.size();
    return out;
}

}  // namespace dialsynth

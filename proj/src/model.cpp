#include "dialsynth/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dialsynth {

using nlohmann::json;

const AbstractState* DialogueModel::find_state(std::string_view name) const
{
    auto it = state_index_.find(std::string(name));
    return it == state_index_.end() ? nullptr : &states_[it->second];
}

const Transition* DialogueModel::find_transition(std::string_view id) const
{
    auto it = transition_index_.find(std::string(id));
    return it == transition_index_.end() ? nullptr : &transitions_[it->second];
}

std::span<const std::size_t> DialogueModel::outgoing(std::string_view state) const
{
    auto it = state_index_.find(std::string(state));
    if (it == state_index_.end()) return {};
    return outgoing_[it->second];
}

std::size_t DialogueModel::count_acts(Speaker s) const
{
    return static_cast<std::size_t>(
        std::count_if(acts_.begin(), acts_.end(), [s](const DialogueAct& a) { return a.speaker == s; }));
}

nlohmann::ordered_json DialogueModel::to_json() const
{
    nlohmann::ordered_json doc;
    doc["states"] = nlohmann::ordered_json::array();
    for (const auto& s : states_)
        doc["states"].push_back({{"name", s.name}, {"start", s.is_start}, {"end", s.is_end}});
    doc["acts"] = nlohmann::ordered_json::array();
    for (const auto& a : acts_)
        doc["acts"].push_back({{"name", a.name}, {"speaker", a.speaker == Speaker::agent ? "agent" : "user"}});
    doc["transitions"] = nlohmann::ordered_json::array();
    for (const auto& t : transitions_)
        doc["transitions"].push_back({{"id", t.id},
                                      {"from", t.from_state},
                                      {"agent_act", t.agent_act},
                                      {"user_act", t.user_act},
                                      {"to", t.to_state}});
    return doc;
}

namespace {

std::string req_string(const json& obj, const char* key, const std::string& ctx)
{
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw FormatError("model: " + ctx + " is missing string field \"" + key + "\"");
    std::string v = it->get<std::string>();
    if (v.empty()) throw Error("model: " + ctx + " has an empty \"" + key + "\"");
    return v;
}

bool opt_bool(const json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end()) return false;
    if (!it->is_boolean()) throw FormatError(std::string("model: field \"") + key + "\" must be a boolean");
    return it->get<bool>();
}

const json& req_array(const json& doc, const char* key)
{
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_array())
        throw FormatError(std::string("model: missing array \"") + key + "\"");
    return *it;
}

}  // namespace

DialogueModel load_model(const json& doc, const ModelLoadOptions& opts, std::vector<std::string>* warnings)
{
    if (!doc.is_object()) throw FormatError("model: document must be a JSON object");
    DialogueModel m;

    std::vector<std::size_t> starts, ends;
    for (const auto& s : req_array(doc, "states")) {
        if (!s.is_object()) throw FormatError("model: state entries must be objects");
        AbstractState st{req_string(s, "name", "state"), opt_bool(s, "start"), opt_bool(s, "end")};
        if (m.state_index_.count(st.name)) throw Error("model: duplicate state \"" + st.name + "\"");
        m.state_index_[st.name] = m.states_.size();
        if (st.is_start) starts.push_back(m.states_.size());
        if (st.is_end) ends.push_back(m.states_.size());
        m.states_.push_back(std::move(st));
    }
    if (starts.size() != 1)
        throw Error("model: expected exactly one start state, found " + std::to_string(starts.size()));
    if (ends.size() != 1)
        throw Error("model: expected exactly one end state, found " + std::to_string(ends.size()));
    m.start_ = starts.front();
    m.end_ = ends.front();

    std::set<std::pair<std::string, Speaker>> act_keys;
    for (const auto& a : req_array(doc, "acts")) {
        if (!a.is_object()) throw FormatError("model: act entries must be objects");
        std::string name = req_string(a, "name", "act");
        std::string speaker = req_string(a, "speaker", "act \"" + name + "\"");
        Speaker sp;
        if (speaker == "agent")
            sp = Speaker::agent;
        else if (speaker == "user")
            sp = Speaker::user;
        else
            throw Error("model: act \"" + name + "\" has unknown speaker \"" + speaker + "\"");
        if (!act_keys.insert({name, sp}).second)
            throw Error("model: duplicate " + speaker + " act \"" + name + "\"");
        m.acts_.push_back({std::move(name), sp});
    }

    m.outgoing_.resize(m.states_.size());
    for (const auto& t : req_array(doc, "transitions")) {
        if (!t.is_object()) throw FormatError("model: transition entries must be objects");
        Transition tr{req_string(t, "id", "transition"), {}, {}, {}, {}};
        const std::string ctx = "transition \"" + tr.id + "\"";
        tr.from_state = req_string(t, "from", ctx);
        tr.agent_act = req_string(t, "agent_act", ctx);
        tr.user_act = req_string(t, "user_act", ctx);
        tr.to_state = req_string(t, "to", ctx);
        if (m.transition_index_.count(tr.id)) throw Error("model: duplicate transition id \"" + tr.id + "\"");
        for (const auto* ref : {&tr.from_state, &tr.to_state})
            if (!m.state_index_.count(*ref))
                throw Error("model: " + ctx + " references unknown state \"" + *ref + "\"");
        if (!act_keys.count({tr.agent_act, Speaker::agent}))
            throw Error("model: " + ctx + " references unknown agent act \"" + tr.agent_act + "\"");
        if (!act_keys.count({tr.user_act, Speaker::user}))
            throw Error("model: " + ctx + " references unknown user act \"" + tr.user_act + "\"");
        m.transition_index_[tr.id] = m.transitions_.size();
        m.outgoing_[m.state_index_[tr.from_state]].push_back(m.transitions_.size());
        m.transitions_.push_back(std::move(tr));
    }

    // Reachability from start and co-reachability of end.
    const std::size_t n = m.states_.size();
    std::vector<char> fwd(n, 0), bwd(n, 0);
    std::vector<std::size_t> stack{m.start_};
    fwd[m.start_] = 1;
    while (!stack.empty()) {
        std::size_t s = stack.back();
        stack.pop_back();
        for (std::size_t ti : m.outgoing_[s]) {
            std::size_t to = m.state_index_[m.transitions_[ti].to_state];
            if (!fwd[to]) {
                fwd[to] = 1;
                stack.push_back(to);
            }
        }
    }
    bwd[m.end_] = 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& tr : m.transitions_) {
            std::size_t from = m.state_index_[tr.from_state], to = m.state_index_[tr.to_state];
            if (bwd[to] && !bwd[from]) {
                bwd[from] = 1;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::string problem;
        if (!fwd[i])
            problem = "state \"" + m.states_[i].name + "\" is unreachable from the start state";
        else if (!bwd[i])
            problem = "state \"" + m.states_[i].name + "\" cannot reach the end state";
        if (problem.empty()) continue;
        if (!opts.allow_unreachable) throw Error("model: " + problem);
        if (warnings) warnings->push_back("model: " + problem);
    }

    m.hash_ = fnv1a(m.to_json().dump());
    return m;
}

DialogueModel load_model_file(const std::string& path, const ModelLoadOptions& opts,
                              std::vector<std::string>* warnings)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return load_model(doc, opts, warnings);
}

std::vector<Transition> enabled_transitions(const DialogueModel& model, std::string_view state)
{
    if (!model.find_state(state)) throw Error("unknown abstract state \"" + std::string(state) + "\"");
    std::vector<Transition> out;
    for (std::size_t i : model.outgoing(state)) out.push_back(model.transitions()[i]);
    return out;
}

ConcreteState initial_state_of(const Dialogue& d, const DialogueModel& model)
{
    if (d.initial_state) return *d.initial_state;
    std::string dom = d.turns.empty() ? d.domain : d.turns.front().end_state.domain;
    return ConcreteState{model.start().name, dom, {}};
}

std::string qualify_slot(std::string_view domain, std::string_view slot)
{
    std::string out(domain);
    out += '-';
    out += slot;
    return out;
}

static bool is_qualified(std::string_view name)
{
    return name.find('-') != std::string_view::npos;
}

SlotSet project_slots(const ConcreteState& s, std::string_view domain)
{
    SlotSet out;
    for (const auto& [name, v] : s.slots) {
        if (is_qualified(name)) {
            auto dash = name.find('-');
            if (std::string_view(name).substr(0, dash) == domain) out.set(name.substr(dash + 1), v);
        } else if (s.domain == domain) {
            out.set(name, v);
        }
    }
    return out;
}

SlotSet qualified_slots(const ConcreteState& s)
{
    SlotSet out;
    for (const auto& [name, v] : s.slots) {
        if (is_qualified(name))
            out.set(name, v);
        else
            out.set(qualify_slot(s.domain, name), v);
    }
    return out;
}

}  // namespace dialsynth

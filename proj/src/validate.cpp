#include "dialsynth/grammar.hpp"
#include "dialsynth/model.hpp"

namespace dialsynth {

namespace {

std::string describe(const SlotSet& s)
{
    std::string out = "{";
    for (const auto& [k, v] : s) {
        if (out.size() > 1) out += ", ";
        out += k + "=" + v.display();
    }
    return out + "}";
}

}  // namespace

ValidationReport validate_dialogue(const DialogueModel& model, const BoundGrammar* grammar, const Dialogue& d)
{
    ValidationReport rep;
    auto violate = [&](std::size_t turn, int cond, std::string msg) {
        rep.violations.push_back({turn, cond, std::move(msg)});
    };
    if (d.turns.empty()) {
        violate(0, 3, "dialogue has no turns");
        return rep;
    }
    const bool can_replay = grammar && grammar->model().hash() == model.hash();

    ConcreteState prev = initial_state_of(d, model);
    if (prev.abstract != model.start().name)
        violate(0, 3, "first turn starts in " + prev.abstract + ", not " + model.start().name);

    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& t = d.turns[i];
        for (const auto* u : {&t.agent_utterance, &t.user_utterance})
            if (u->find(kSepToken) != std::string::npos) violate(i, 0, "utterance contains the <sep> token");

        const Splice* splice = nullptr;
        for (const auto& s : d.splices)
            if (s.turn_index == i) splice = &s;
        const std::string& from = splice ? splice->resume_abstract : prev.abstract;
        const std::string& to = t.end_state.abstract;

        if (!model.find_state(to)) {
            violate(i, 1, "unknown abstract state " + to);
        } else if (t.provenance) {
            const Transition* tr = model.find_transition(t.provenance->transition_id);
            if (!tr)
                violate(i, 1, "unknown transition " + t.provenance->transition_id);
            else if (tr->from_state != from || tr->to_state != to)
                violate(i, 1,
                        "transition " + tr->id + " goes " + tr->from_state + " -> " + tr->to_state + ", turn goes " +
                            from + " -> " + to);
        } else {
            bool found = false;
            for (std::size_t ti : model.outgoing(from))
                found = found || model.transitions()[ti].to_state == to;
            if (!found) violate(i, 1, "no transition from " + from + " to " + to);
        }

        if (to == model.end().name && i + 1 != d.turns.size()) violate(i, 3, "dialogue reaches End before its last turn");

        const std::string& dom = t.end_state.domain;
        if (!t.provenance || !can_replay || dom != grammar->domain()) {
            ++rep.skipped_turns;
        } else {
            const TurnTemplate* tmpl = grammar->find_template(t.provenance->template_id);
            if (!tmpl) {
                violate(i, 2, "unknown template " + t.provenance->template_id);
            } else if (model.transitions()[tmpl->transition].id != t.provenance->transition_id) {
                violate(i, 2, "template " + tmpl->id + " does not belong to transition " + t.provenance->transition_id);
            } else {
                ConcreteState start{from, dom, splice ? splice->resume_slots : project_slots(prev, dom)};
                auto got = grammar->replay(*tmpl, start, t.provenance->captures);
                SlotSet expected = project_slots(t.end_state, dom);
                if (!got)
                    violate(i, 2, "template " + tmpl->id + " rejects the recorded captures");
                else if (got->abstract != to || got->slots != expected)
                    violate(i, 2,
                            "replay gives " + got->abstract + " " + describe(got->slots) + ", recorded " + to + " " +
                                describe(expected));
                ++rep.replayed_turns;
            }
        }
        prev = t.end_state;
    }
    if (prev.abstract != model.end().name)
        violate(d.turns.size() - 1, 3, "dialogue ends in " + prev.abstract + ", not " + model.end().name);
    return rep;
}

}  // namespace dialsynth

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dialsynth/common.hpp"

namespace dialsynth {

struct AbstractState {
    std::string name;
    bool is_start = false;
    bool is_end = false;
};

enum class Speaker { agent, user };

struct DialogueAct {
    std::string name;
    Speaker speaker = Speaker::agent;
};

struct Transition {
    std::string id;
    std::string from_state;
    std::string agent_act;
    std::string user_act;
    std::string to_state;
};

struct ModelLoadOptions {
    // Demotes unreachable / dead-end states from errors to warnings.
    bool allow_unreachable = false;
};

// The abstract transaction dialogue model: a finite state machine whose
// edges are (agent act, user act) pairs. Immutable once loaded.
class DialogueModel {
public:
    const std::vector<AbstractState>& states() const { return states_; }
    const std::vector<DialogueAct>& acts() const { return acts_; }
    const std::vector<Transition>& transitions() const { return transitions_; }

    const AbstractState& start() const { return states_[start_]; }
    const AbstractState& end() const { return states_[end_]; }

    const AbstractState* find_state(std::string_view name) const;
    const Transition* find_transition(std::string_view id) const;
    // Indices into transitions(), document order.
    std::span<const std::size_t> outgoing(std::string_view state) const;

    std::size_t count_acts(Speaker s) const;
    uint64_t hash() const { return hash_; }

    nlohmann::ordered_json to_json() const;

private:
    friend DialogueModel load_model(const nlohmann::json&, const ModelLoadOptions&,
                                    std::vector<std::string>*);

    std::vector<AbstractState> states_;
    std::vector<DialogueAct> acts_;
    std::vector<Transition> transitions_;
    std::size_t start_ = 0;
    std::size_t end_ = 0;
    std::unordered_map<std::string, std::size_t> state_index_;
    std::unordered_map<std::string, std::size_t> transition_index_;
    std::vector<std::vector<std::size_t>> outgoing_;
    uint64_t hash_ = 0;
};

DialogueModel load_model(const nlohmann::json& doc, const ModelLoadOptions& opts = {},
                         std::vector<std::string>* warnings = nullptr);
DialogueModel load_model_file(const std::string& path, const ModelLoadOptions& opts = {},
                              std::vector<std::string>* warnings = nullptr);

// Transitions leaving `state`, in document order. Throws Error on unknown state.
std::vector<Transition> enabled_transitions(const DialogueModel& model, std::string_view state);

// ---------------------------------------------------------------------------
// Concrete dialogues

struct ConcreteState {
    std::string abstract;
    std::string domain;
    // Plain slot names for single-domain states; "domain-slot" names once a
    // dialogue spans several domains.
    SlotSet slots;

    friend bool operator==(const ConcreteState&, const ConcreteState&) = default;
};

struct Provenance {
    std::string transition_id;
    std::string template_id;
    std::map<std::string, SemValue> captures;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Turn {
    std::string agent_utterance;
    std::string user_utterance;
    ConcreteState end_state;
    std::optional<Provenance> provenance;

    friend bool operator==(const Turn&, const Turn&) = default;
};

// A point where a multi-domain dialogue resumes in a second domain. The turn
// at `turn_index` is checked as if it started from `resume_abstract` with the
// second domain's slots `resume_slots` (unqualified).
struct Splice {
    std::size_t turn_index = 0;
    std::string resume_abstract;
    SlotSet resume_slots;

    friend bool operator==(const Splice&, const Splice&) = default;
};

struct Dialogue {
    std::string id;
    std::string domain;
    std::vector<Turn> turns;
    // Absent means the model's start state with no slots.
    std::optional<ConcreteState> initial_state;
    std::vector<Splice> splices;

    friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

struct DialogueCorpus {
    std::vector<Dialogue> dialogues;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

ConcreteState initial_state_of(const Dialogue& d, const DialogueModel& model);

// Slot helpers for multi-domain states.
std::string qualify_slot(std::string_view domain, std::string_view slot);
// Slots of `domain` with the "domain-" prefix removed. For a single-domain
// state (no qualified names) whose domain matches, returns all slots.
SlotSet project_slots(const ConcreteState& s, std::string_view domain);
// All slots as "domain-slot" names.
SlotSet qualified_slots(const ConcreteState& s);

// ---------------------------------------------------------------------------
// Well-formedness

class BoundGrammar;

struct Violation {
    std::size_t turn = 0;
    // 1: turn is not an allowed transition; 2: replayed state differs;
    // 3: start/chaining/end; 0: structural invariant of the turn itself.
    int condition = 0;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::size_t replayed_turns = 0;
    std::size_t skipped_turns = 0;

    bool ok() const { return violations.empty(); }
    bool replay_skipped() const { return skipped_turns > 0; }
};

ValidationReport validate_dialogue(const DialogueModel& model, const BoundGrammar* grammar,
                                   const Dialogue& d);

}  // namespace dialsynth

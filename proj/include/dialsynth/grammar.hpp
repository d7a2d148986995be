#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dialsynth/common.hpp"
#include "dialsynth/model.hpp"

namespace dialsynth {

class Ontology;

struct TemplateSource {
    std::string name;
    std::string text;
};

// All top-level *.tmpl files of `dir` (sorted by file name), followed by
// domains/<domain>.tmpl when it exists.
std::vector<TemplateSource> load_template_dir(const std::string& dir, std::string_view domain);

// ---------------------------------------------------------------------------
// Semantic action language

// Captures are referenced by position in the owning production's capture
// list; `var` keeps the source name for diagnostics and serialization.
struct Operand {
    enum class Kind { state_slots, capture, slot, union_of };
    Kind kind = Kind::state_slots;
    std::string var;
    int capture = -1;
    std::string slot;
    std::vector<Operand> parts;
};

struct Term {
    enum class Kind { literal, capture, capture_name, capture_value, slot };
    Kind kind = Kind::literal;
    std::string text;
    std::string var;
    int capture = -1;
};

struct Guard {
    enum class Kind { absent, present, requested, disjoint, consistent, eq };
    Kind kind = Kind::absent;
    bool negated = false;
    Operand a, b;
    Term x, y;
    SourceLoc loc;
};

struct Effect {
    enum class Kind { set_abstract, set_slot, merge, clear_slot, clear_capture, clear_requested };
    enum class Value { requested, dontcare, capture_value, capture, literal };
    Kind kind = Kind::set_abstract;
    // set_abstract: state name; set_slot / clear_slot with a literal target: slot name.
    std::string name;
    // set_slot with a "$x.name" target, merge, clear_capture.
    std::string var;
    int capture = -1;
    Value value = Value::requested;
    std::string value_var;
    int value_capture = -1;
    std::string value_text;
    SourceLoc loc;
};

struct Expr {
    enum class Kind { capture, empty, union_of, pair, literal };
    enum class PairValue { capture, literal, dontcare, requested, hook_value };
    Kind kind = Kind::empty;
    std::string var;
    int capture = -1;
    std::string slot;
    std::string text;
    PairValue pair_value = PairValue::literal;
    std::vector<Expr> parts;
};

struct SemanticAction {
    std::vector<Guard> guards;
    std::vector<Effect> effects;
    std::optional<Expr> result;

    bool empty() const { return guards.empty() && effects.empty() && !result; }
};

// Captured values in capture order; entries may be null only for captures the
// action does not reference.
using CaptureView = std::span<const SemValue* const>;

bool eval_guard(const Guard& g, const SlotSet& state_slots, CaptureView captures);
// Applies the action to a copy of `state`. Returns nullopt when a guard fails.
std::optional<ConcreteState> eval_action(const SemanticAction& a, const ConcreteState& state,
                                         CaptureView captures);
// Result value of a phrase production. `hook_value` substitutes $value.
// Returns nullopt when a union would bind the same slot twice.
std::optional<SemValue> eval_expr(const Expr& e, CaptureView captures, std::string_view hook_value = {});

// Captures referenced by a guard (sorted, unique).
std::vector<int> guard_captures(const Guard& g);

// ---------------------------------------------------------------------------
// Parsed grammar

struct Item {
    enum class Kind { literal, ref };
    Kind kind = Kind::literal;
    std::string text;  // literal text
    std::string nt;    // referenced non-terminal
    int capture = -1;  // index into Production::captures
    SourceLoc loc;
};

enum class ProductionKind { phrase, turn_template };

struct Production {
    ProductionKind kind = ProductionKind::phrase;
    std::string lhs;  // empty for turn templates
    std::vector<Item> rhs;
    std::vector<std::string> captures;
    SemanticAction action;
    // turn templates only
    std::string template_id;
    std::string transition_id;
    std::size_t sep = 0;  // rhs[0, sep) is the agent part, rhs[sep, end) the user part
    SourceLoc loc;
};

enum class HookKind { values, names, info, subject };

struct PatternPiece {
    bool is_value = false;
    std::string text;
};

// A domain template: a non-terminal whose productions are instantiated from
// the ontology at bind time.
struct DomainHook {
    HookKind kind = HookKind::values;
    std::string nt;
    std::string slot;
    std::vector<std::vector<PatternPiece>> patterns;
    std::optional<Expr> result;
    SourceLoc loc;
};

struct NonTerminal {
    std::string name;
    ValueKind kind = ValueKind::slot_set;
    SourceLoc loc;
};

class Grammar {
public:
    const std::vector<NonTerminal>& nonterminals() const { return nonterminals_; }
    const std::vector<Production>& productions() const { return productions_; }
    const std::vector<DomainHook>& hooks() const { return hooks_; }
    const NonTerminal* find_nonterminal(std::string_view name) const;
    uint64_t hash() const { return hash_; }

private:
    friend Grammar parse_templates(const std::vector<TemplateSource>&);

    std::vector<NonTerminal> nonterminals_;
    std::vector<Production> productions_;
    std::vector<DomainHook> hooks_;
    uint64_t hash_ = 0;
};

Grammar parse_templates(const std::vector<TemplateSource>& sources);

// ---------------------------------------------------------------------------
// Grammar bound to a model, an ontology and one domain

struct BoundItem {
    bool literal = true;
    std::string text;
    int nt = -1;
    int capture = -1;
};

struct BoundProduction {
    int lhs = -1;
    std::vector<BoundItem> rhs;
    std::vector<int> capture_nts;  // non-terminal of each capture, in order
    SemanticAction action;
    bool all_literal = false;
    // Precomputed for all-literal productions that pass their guards.
    std::string literal_surface;
    std::optional<SemValue> literal_value;
};

struct BoundNonTerminal {
    std::string name;
    ValueKind kind = ValueKind::slot_set;
    std::vector<int> productions;
};

struct TurnTemplate {
    std::string id;
    std::size_t transition = 0;  // index into model().transitions()
    std::vector<BoundItem> agent, user;
    std::vector<std::string> capture_names;
    std::vector<int> capture_nts;
    SemanticAction action;  // always ends the turn in the transition's target state
    // Guard indices by the number of captures they read.
    std::vector<int> state_guards;
    std::vector<std::vector<int>> unary_guards;  // per capture
    std::vector<int> nary_guards;
};

class BoundGrammar {
public:
    const DialogueModel& model() const { return model_; }
    const std::string& domain() const { return domain_; }
    uint64_t grammar_hash() const { return grammar_hash_; }
    const std::vector<std::string>& domain_slots() const { return domain_slots_; }

    const std::vector<BoundNonTerminal>& nonterminals() const { return nonterminals_; }
    const std::vector<BoundProduction>& productions() const { return productions_; }
    const std::vector<TurnTemplate>& templates() const { return templates_; }

    int find_nonterminal(std::string_view name) const;
    const TurnTemplate* find_template(std::string_view id) const;
    // Indices into templates() registered on a transition.
    std::span<const std::size_t> templates_for(std::size_t transition) const { return by_transition_[transition]; }

    // Replays a template's action with named captures. Returns nullopt on a
    // guard failure or when a referenced capture is missing.
    std::optional<ConcreteState> replay(const TurnTemplate& t, const ConcreteState& state,
                                        const std::map<std::string, SemValue>& captures) const;

private:
    friend BoundGrammar bind_ontology(const Grammar&, const DialogueModel&, const Ontology&, std::string_view,
                                      std::vector<std::string>*);

    DialogueModel model_;
    std::string domain_;
    uint64_t grammar_hash_ = 0;
    std::vector<std::string> domain_slots_;
    std::vector<BoundNonTerminal> nonterminals_;
    std::vector<BoundProduction> productions_;
    std::vector<TurnTemplate> templates_;
    std::vector<std::vector<std::size_t>> by_transition_;
    std::map<std::string, int, std::less<>> nt_index_;
    std::map<std::string, std::size_t, std::less<>> template_index_;
};

BoundGrammar bind_ontology(const Grammar& g, const DialogueModel& model, const Ontology& ont,
                           std::string_view domain, std::vector<std::string>* warnings = nullptr);

}  // namespace dialsynth

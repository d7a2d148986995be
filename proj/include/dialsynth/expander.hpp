#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dialsynth/grammar.hpp"
#include "dialsynth/parallel.hpp"

namespace dialsynth {

struct ExpansionParams {
    int max_depth = 6;
    std::size_t pruning_size = 1000;
    uint64_t rng_seed = 0;
    // Cap on candidate evaluations per production per depth (and per turn
    // template), as a multiple of pruning_size.
    std::size_t budget_factor = 10;

    std::size_t budget() const { return pruning_size * budget_factor; }
};

struct Derivation {
    int production = -1;
    int depth = 0;
    std::vector<uint32_t> children;  // indices into each child non-terminal's table
    SemValue value;
    std::string surface;
};

// Depth-indexed derivation tables for every non-terminal of a bound grammar.
// Each table is ordered by (depth, production, children).
class DerivationTables {
public:
    DerivationTables(const BoundGrammar& bg, const ExpansionParams& params, ExecPolicy policy = ExecPolicy::parallel);

    const BoundGrammar& grammar() const { return *bg_; }
    const ExpansionParams& params() const { return params_; }
    std::span<const Derivation> table(int nt) const { return tables_[static_cast<std::size_t>(nt)]; }
    // Derivations of `nt` with depth <= d.
    std::span<const Derivation> up_to(int nt, int d) const;
    // Number of derivations evaluated (accepted or not) while building.
    std::size_t evaluations() const { return evaluations_; }

private:
    const BoundGrammar* bg_;
    ExpansionParams params_;
    std::vector<std::vector<Derivation>> tables_;
    std::vector<std::vector<std::size_t>> depth_end_;
    std::size_t evaluations_ = 0;
};

// All derivations of `nt` up to params.max_depth. Throws Error on unknown nt.
std::vector<Derivation> expand_nonterminal(const BoundGrammar& bg, std::string_view nt, const ExpansionParams& params,
                                           ExecPolicy policy = ExecPolicy::parallel);

struct TurnCandidate {
    std::string transition_id;
    std::string template_id;
    std::string agent_utterance;
    std::string user_utterance;
    ConcreteState new_state;
    std::map<std::string, SemValue> captures;
};

// Accepted turn expansions in compact form: a template index plus one table
// index per capture.
class TurnPlans {
public:
    std::size_t size() const { return offsets_.size(); }
    bool empty() const { return offsets_.empty(); }
    std::size_t template_index(std::size_t i) const { return data_[offsets_[i]]; }
    std::span<const uint32_t> children(std::size_t i) const
    {
        std::size_t b = offsets_[i] + 1;
        std::size_t e = i + 1 < offsets_.size() ? offsets_[i + 1] : data_.size();
        return {data_.data() + b, e - b};
    }
    void add(std::size_t tmpl, std::span<const uint32_t> children);
    void append(const TurnPlans& other);
    TurnPlans select(std::span<const std::size_t> indices) const;

private:
    std::vector<uint32_t> data_;
    std::vector<std::size_t> offsets_;
};

class TurnExpander {
public:
    TurnExpander(const BoundGrammar& bg, const ExpansionParams& params, ExecPolicy policy = ExecPolicy::parallel);

    const DerivationTables& tables() const { return tables_; }
    const ExpansionParams& params() const { return params_; }

    // Accepted expansions of every template on `transition` from `state`.
    // With `prune`, the result is sampled down to pruning_size.
    TurnPlans plan(std::size_t transition, const ConcreteState& state, uint64_t seed, bool prune = true) const;
    TurnCandidate realize(const TurnPlans& plans, std::size_t i, const ConcreteState& state) const;

    std::vector<TurnCandidate> expand(const Transition& t, const ConcreteState& state) const;

private:
    ExpansionParams params_;
    DerivationTables tables_;
};

// One-shot form: builds derivation tables and expands a single turn.
std::vector<TurnCandidate> expand_turn(const BoundGrammar& bg, const Transition& t, const ConcreteState& state,
                                       const ExpansionParams& params, ExecPolicy policy = ExecPolicy::parallel);

// Uniform sample of k indices out of n, ascending, seeded.
std::vector<std::size_t> prune_indices(std::size_t n, std::size_t k, uint64_t seed);

}  // namespace dialsynth

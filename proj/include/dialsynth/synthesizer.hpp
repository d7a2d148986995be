#pragma once

#include <map>
#include <string>
#include <vector>

#include "dialsynth/expander.hpp"

namespace dialsynth {

// Where the per-turn pruning size applies.
enum class PruningScope { per_transition, per_context };

// How extended dialogues are cut back to the working-set size.
//   balanced: every chosen (context, transition) pair gets an equal share,
//             unused shares flow to pairs with more candidates;
//   uniform:  a plain uniform sample over all candidates.
enum class TruncationPolicy { balanced, uniform };

struct SynthesisParams {
    int max_turns = 6;
    std::size_t working_set_size = 10000;
    std::size_t transitions_per_iteration = 0;  // 0 means working_set_size
    ExpansionParams first_turn{9, 50000, 0, 10};
    ExpansionParams later_turns{6, 1000, 0, 10};
    uint64_t seed = 0;
    // Run minibatches until this many dialogues exist, then keep the first
    // target_size of them. 0 runs a single minibatch.
    std::size_t target_size = 0;
    bool keep_stalled = false;
    PruningScope pruning_scope = PruningScope::per_transition;
    TruncationPolicy truncation = TruncationPolicy::balanced;
    ExecPolicy policy = ExecPolicy::parallel;

    nlohmann::ordered_json to_json() const;
};

struct SynthesisTrace {
    std::size_t batches = 0;
    // Largest working set seen after each iteration of each batch.
    std::vector<std::size_t> working_set_sizes;
    std::size_t stalled_discarded = 0;
    std::size_t stalled_completed = 0;
    std::size_t pairs_planned = 0;
};

// Ready-made synthesis inputs; the expanders hold derivation tables that are
// expensive to build, so reuse one context across runs with the same params.
class Synthesizer {
public:
    Synthesizer(const DialogueModel& model, const BoundGrammar& bg, const SynthesisParams& params);

    DialogueCorpus run(SynthesisTrace* trace = nullptr) const;

private:
    struct Partial {
        std::vector<Turn> turns;
        ConcreteState state;
    };

    void run_batch(uint64_t batch_seed, std::vector<Dialogue>& out, SynthesisTrace& trace) const;
    bool complete_stalled(const Partial& p, uint64_t seed, std::vector<Dialogue>& out) const;

    const DialogueModel& model_;
    const BoundGrammar& bg_;
    SynthesisParams params_;
    TurnExpander first_;
    TurnExpander later_;
};

DialogueCorpus synthesize(const DialogueModel& model, const BoundGrammar& bg, const SynthesisParams& params,
                          SynthesisTrace* trace = nullptr);

// Picks `count` of `num_pairs` (context, transition) pairs uniformly without
// replacement; ascending.
std::vector<std::size_t> select_pairs(std::size_t num_pairs, std::size_t count, Rng& rng);

// Draws n_samples (context, transition) choices, each uniform over the pairs
// formed by `contexts` (abstract state names) and their enabled transitions
// that have templates. Returns counts per transition id.
std::map<std::string, std::size_t> transition_sampling_histogram(const DialogueModel& model, const BoundGrammar& bg,
                                                                 const std::vector<std::string>& contexts,
                                                                 std::size_t n_samples, uint64_t seed);

// Per-pair shares of `capacity` given candidate counts (sum equals
// min(capacity, sum of counts)).
std::vector<std::size_t> allocate_balanced(const std::vector<std::size_t>& counts, std::size_t capacity, Rng& rng);
std::vector<std::size_t> allocate_uniform(const std::vector<std::size_t>& counts, std::size_t capacity, Rng& rng);

}  // namespace dialsynth

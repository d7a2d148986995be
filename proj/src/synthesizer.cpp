#include "dialsynth/synthesizer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace dialsynth {

namespace {

constexpr uint64_t kSelectTag = 0x73656c656374ULL;
constexpr uint64_t kAllocTag = 0x616c6c6f63ULL;
constexpr uint64_t kOrderTag = 0x6f72646572ULL;
constexpr uint64_t kStallTag = 0x7374616c6cULL;

// First m entries of a seeded random permutation of [0, n). The prefix for a
// given seed does not depend on m.
std::vector<std::size_t> permutation_prefix(std::size_t n, std::size_t m, uint64_t seed)
{
    m = std::min(m, n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    return idx;
}

std::string make_id(const std::string& domain, std::size_t seq)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", seq);
    return "SYN-" + domain + "-" + buf;
}

nlohmann::ordered_json expansion_json(const ExpansionParams& p)
{
    return {{"max_depth", p.max_depth}, {"pruning_size", p.pruning_size}, {"budget_factor", p.budget_factor}};
}

}  // namespace

nlohmann::ordered_json SynthesisParams::to_json() const
{
    return {{"max_turns", max_turns},
            {"working_set_size", working_set_size},
            {"transitions_per_iteration", transitions_per_iteration ? transitions_per_iteration : working_set_size},
            {"first_turn", expansion_json(first_turn)},
            {"later_turns", expansion_json(later_turns)},
            {"seed", seed},
            {"target_size", target_size},
            {"keep_stalled", keep_stalled},
            {"pruning_scope", pruning_scope == PruningScope::per_transition ? "per_transition" : "per_context"},
            {"truncation", truncation == TruncationPolicy::balanced ? "balanced" : "uniform"}};
}

std::vector<std::size_t> select_pairs(std::size_t num_pairs, std::size_t count, Rng& rng)
{
    return sample_indices(num_pairs, count, rng);
}

std::vector<std::size_t> allocate_balanced(const std::vector<std::size_t>& counts, std::size_t capacity, Rng& rng)
{
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total <= capacity) return counts;
    auto filled = [&](std::size_t level) {
        std::size_t s = 0;
        for (std::size_t c : counts) s += std::min(c, level);
        return s;
    };
    // Largest level whose fill fits the capacity.
    std::size_t lo = 0, hi = *std::max_element(counts.begin(), counts.end());
    while (lo < hi) {
        std::size_t mid = lo + (hi - lo + 1) / 2;
        if (filled(mid) <= capacity)
            lo = mid;
        else
            hi = mid - 1;
    }
    std::vector<std::size_t> out(counts.size());
    std::vector<std::size_t> above;
    std::size_t used = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out[i] = std::min(counts[i], lo);
        used += out[i];
        if (counts[i] > lo) above.push_back(i);
    }
    for (std::size_t k : sample_indices(above.size(), capacity - used, rng)) ++out[above[k]];
    return out;
}

std::vector<std::size_t> allocate_uniform(const std::vector<std::size_t>& counts, std::size_t capacity, Rng& rng)
{
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total <= capacity) return counts;
    std::vector<std::size_t> out(counts.size(), 0);
    auto picks = sample_indices(total, capacity, rng);
    std::size_t pair = 0, start = 0;
    for (std::size_t p : picks) {
        while (p >= start + counts[pair]) start += counts[pair++];
        ++out[pair];
    }
    return out;
}

// ---------------------------------------------------------------------------

Synthesizer::Synthesizer(const DialogueModel& model, const BoundGrammar& bg, const SynthesisParams& params)
    : model_(model),
      bg_(bg),
      params_(params),
      first_((bg.model().hash() == model.hash() ? bg : throw Error("grammar is bound to a different dialogue model")),
             [&] {
                 ExpansionParams p = params.first_turn;
                 p.rng_seed = mix_seed(params.seed, 1);
                 return p;
             }(),
             params.policy),
      later_(bg,
             [&] {
                 ExpansionParams p = params.later_turns;
                 p.rng_seed = mix_seed(params.seed, 2);
                 return p;
             }(),
             params.policy)
{
    if (params.max_turns < 1) throw Error("max_turns must be at least 1");
    if (params.working_set_size < 1) throw Error("working set size must be at least 1");
    bool any = false;
    for (std::size_t ti : model.outgoing(model.start().name)) any = any || !bg.templates_for(ti).empty();
    if (!any) throw Error("no turn templates on the transitions leaving " + model.start().name);
}

bool Synthesizer::complete_stalled(const Partial& p, uint64_t seed, std::vector<Dialogue>& out) const
{
    if (!params_.keep_stalled || p.turns.empty() || static_cast<int>(p.turns.size()) >= params_.max_turns) return false;
    for (std::size_t ti : model_.outgoing(p.state.abstract)) {
        if (model_.transitions()[ti].to_state != model_.end().name) continue;
        TurnPlans plans = later_.plan(ti, p.state, mix_seed(seed, ti));
        if (plans.empty()) continue;
        Rng rng(mix_seed(seed, kStallTag));
        TurnCandidate c = later_.realize(plans, static_cast<std::size_t>(rng.below(plans.size())), p.state);
        Dialogue d;
        d.domain = bg_.domain();
        d.turns = p.turns;
        d.turns.push_back({std::move(c.agent_utterance), std::move(c.user_utterance), std::move(c.new_state),
                           Provenance{std::move(c.transition_id), std::move(c.template_id), std::move(c.captures)}});
        out.push_back(std::move(d));
        return true;
    }
    return false;
}

void Synthesizer::run_batch(uint64_t batch_seed, std::vector<Dialogue>& out, SynthesisTrace& trace) const
{
    const std::size_t S = params_.working_set_size;
    const std::size_t per_iter = params_.transitions_per_iteration ? params_.transitions_per_iteration : S;
    const std::string& end_name = model_.end().name;

    std::vector<Partial> W;
    W.push_back({{}, ConcreteState{model_.start().name, bg_.domain(), {}}});
    std::size_t stall_counter = 0;

    auto retire = [&](const Partial& p) {
        if (complete_stalled(p, mix_seed(batch_seed, kStallTag, stall_counter++), out))
            ++trace.stalled_completed;
        else
            ++trace.stalled_discarded;
    };

    for (int iter = 0; iter < params_.max_turns && !W.empty(); ++iter) {
        const TurnExpander& ex = iter == 0 ? first_ : later_;
        const std::size_t prune_size = ex.params().pruning_size;
        const uint64_t iter_seed = mix_seed(batch_seed, static_cast<uint64_t>(iter));

        struct Pair {
            std::size_t ctx;
            std::size_t transition;
        };
        std::vector<Pair> pairs;
        for (std::size_t c = 0; c < W.size(); ++c)
            for (std::size_t ti : model_.outgoing(W[c].state.abstract))
                if (!bg_.templates_for(ti).empty()) pairs.push_back({c, ti});

        Rng sel_rng(mix_seed(iter_seed, kSelectTag));
        std::vector<std::size_t> chosen = select_pairs(pairs.size(), std::min(per_iter, pairs.size()), sel_rng);
        const std::size_t m = chosen.size();
        trace.pairs_planned += m;

        // Group chosen pairs by context (chosen is ascending, so groups are contiguous).
        std::vector<std::size_t> group_begin;
        for (std::size_t i = 0; i < m; ++i)
            if (i == 0 || pairs[chosen[i]].ctx != pairs[chosen[i - 1]].ctx) group_begin.push_back(i);
        group_begin.push_back(m);

        const std::size_t cap = std::max<std::size_t>(16, 4 * ((S + std::max<std::size_t>(m, 1) - 1) / std::max<std::size_t>(m, 1)));
        std::vector<std::size_t> counts(m, 0);
        std::vector<TurnPlans> kept(m);
        std::vector<uint64_t> order_seed(m);

        auto plan_group = [&](std::size_t g, std::vector<TurnPlans>& plans) {
            const std::size_t b = group_begin[g], e = group_begin[g + 1];
            const Partial& ctx = W[pairs[chosen[b]].ctx];
            plans.assign(e - b, {});
            const bool joint = params_.pruning_scope == PruningScope::per_context;
            std::size_t total = 0;
            for (std::size_t i = b; i < e; ++i) {
                plans[i - b] = ex.plan(pairs[chosen[i]].transition, ctx.state, mix_seed(iter_seed, chosen[i]), !joint);
                total += plans[i - b].size();
            }
            if (joint && total > prune_size) {
                auto keep = prune_indices(total, prune_size, mix_seed(iter_seed, kSelectTag, pairs[chosen[b]].ctx));
                std::size_t offset = 0, k = 0;
                for (auto& pl : plans) {
                    std::vector<std::size_t> local;
                    while (k < keep.size() && keep[k] < offset + pl.size()) local.push_back(keep[k++] - offset);
                    offset += pl.size();
                    pl = pl.select(local);
                }
            }
        };

        // Pass 1: plan every chosen pair, keep a random prefix of its candidates.
        for_each_index(group_begin.size() - 1, params_.policy, [&](std::size_t g) {
            std::vector<TurnPlans> plans;
            plan_group(g, plans);
            for (std::size_t i = group_begin[g]; i < group_begin[g + 1]; ++i) {
                const TurnPlans& pl = plans[i - group_begin[g]];
                counts[i] = pl.size();
                order_seed[i] = mix_seed(iter_seed, kOrderTag, chosen[i]);
                kept[i] = pl.select(permutation_prefix(pl.size(), cap, order_seed[i]));
            }
        });

        Rng alloc_rng(mix_seed(iter_seed, kAllocTag));
        std::vector<std::size_t> alloc = params_.truncation == TruncationPolicy::balanced
                                             ? allocate_balanced(counts, S, alloc_rng)
                                             : allocate_uniform(counts, S, alloc_rng);

        // Pass 2: realize the allocated candidates of each pair.
        std::vector<std::vector<Partial>> produced(m);
        for_each_index(group_begin.size() - 1, params_.policy, [&](std::size_t g) {
            const std::size_t b = group_begin[g], e = group_begin[g + 1];
            bool need_replan = false;
            for (std::size_t i = b; i < e; ++i) need_replan = need_replan || alloc[i] > kept[i].size();
            std::vector<TurnPlans> plans;
            if (need_replan) plan_group(g, plans);
            const Partial& ctx = W[pairs[chosen[b]].ctx];
            for (std::size_t i = b; i < e; ++i) {
                if (alloc[i] == 0) continue;
                TurnPlans picked;
                if (alloc[i] <= kept[i].size()) {
                    std::vector<std::size_t> first(alloc[i]);
                    std::iota(first.begin(), first.end(), std::size_t{0});
                    picked = kept[i].select(first);
                } else {
                    picked = plans[i - b].select(permutation_prefix(plans[i - b].size(), alloc[i], order_seed[i]));
                }
                for (std::size_t k = 0; k < picked.size(); ++k) {
                    TurnCandidate c = ex.realize(picked, k, ctx.state);
                    Partial np;
                    np.turns.reserve(ctx.turns.size() + 1);
                    np.turns = ctx.turns;
                    np.state = c.new_state;
                    np.turns.push_back({std::move(c.agent_utterance), std::move(c.user_utterance), std::move(c.new_state),
                                        Provenance{std::move(c.transition_id), std::move(c.template_id),
                                                   std::move(c.captures)}});
                    produced[i].push_back(std::move(np));
                }
            }
        });

        std::vector<char> extended(W.size(), 0);
        std::vector<Partial> next;
        for (std::size_t i = 0; i < m; ++i) {
            if (!produced[i].empty()) extended[pairs[chosen[i]].ctx] = 1;
            for (auto& p : produced[i]) {
                if (p.state.abstract == end_name) {
                    Dialogue d;
                    d.domain = bg_.domain();
                    d.turns = std::move(p.turns);
                    out.push_back(std::move(d));
                } else {
                    next.push_back(std::move(p));
                }
            }
        }
        for (std::size_t c = 0; c < W.size(); ++c)
            if (!extended[c]) retire(W[c]);
        W = std::move(next);
        if (trace.working_set_sizes.size() <= static_cast<std::size_t>(iter)) trace.working_set_sizes.resize(iter + 1, 0);
        trace.working_set_sizes[static_cast<std::size_t>(iter)] =
            std::max(trace.working_set_sizes[static_cast<std::size_t>(iter)], W.size());
    }
    for (const auto& p : W) retire(p);
}

DialogueCorpus Synthesizer::run(SynthesisTrace* trace_out) const
{
    SynthesisTrace trace;
    std::vector<Dialogue> dialogues;
    for (uint64_t batch = 0;; ++batch) {
        const std::size_t before = dialogues.size();
        run_batch(mix_seed(params_.seed, 0x6261746368ULL, batch), dialogues, trace);
        ++trace.batches;
        if (params_.target_size == 0 || dialogues.size() >= params_.target_size) break;
        if (dialogues.size() == before)
            throw Error("synthesis produced no complete dialogues; cannot reach the target size");
    }
    if (params_.target_size > 0 && dialogues.size() > params_.target_size) dialogues.resize(params_.target_size);
    for (std::size_t i = 0; i < dialogues.size(); ++i) dialogues[i].id = make_id(bg_.domain(), i + 1);

    DialogueCorpus corpus;
    corpus.dialogues = std::move(dialogues);
    corpus.metadata["domain"] = bg_.domain();
    corpus.metadata["model_hash"] = hex64(model_.hash());
    corpus.metadata["grammar_hash"] = hex64(bg_.grammar_hash());
    corpus.metadata["seed"] = params_.seed;
    corpus.metadata["params"] = params_.to_json();
    corpus.metadata["batches"] = trace.batches;
    corpus.metadata["dialogues"] = corpus.dialogues.size();
    if (trace_out) *trace_out = std::move(trace);
    return corpus;
}

DialogueCorpus synthesize(const DialogueModel& model, const BoundGrammar& bg, const SynthesisParams& params,
                          SynthesisTrace* trace)
{
    return Synthesizer(model, bg, params).run(trace);
}

std::map<std::string, std::size_t> transition_sampling_histogram(const DialogueModel& model, const BoundGrammar& bg,
                                                                 const std::vector<std::string>& contexts,
                                                                 std::size_t n_samples, uint64_t seed)
{
    if (n_samples == 0) throw Error("n_samples must be at least 1");
    std::vector<std::size_t> pair_transition;
    for (const auto& c : contexts) {
        if (!model.find_state(c)) throw Error("unknown abstract state \"" + c + "\"");
        for (std::size_t ti : model.outgoing(c))
            if (!bg.templates_for(ti).empty()) pair_transition.push_back(ti);
    }
    if (pair_transition.empty()) throw Error("no context enables a transition with templates");
    std::map<std::string, std::size_t> hist;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::size_t pick = select_pairs(pair_transition.size(), 1, rng).front();
        ++hist[model.transitions()[pair_transition[pick]].id];
    }
    return hist;
}

}  // namespace dialsynth

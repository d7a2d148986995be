#include "dialsynth/expander.hpp"

#include <algorithm>
#include <numeric>

namespace dialsynth {

namespace {

using u128 = unsigned __int128;

constexpr u128 kSaturate = u128{1} << 120;
constexpr uint64_t kPruneTag = 0x7072756e65ULL;

u128 sat_mul(u128 a, u128 b)
{
    if (a == 0 || b == 0) return 0;
    if (a >= kSaturate / b) return kSaturate;
    return a * b;
}

// `budget` distinct values of [0, total) (all of them when total <= budget),
// ascending.
std::vector<u128> choose(u128 total, std::size_t budget, uint64_t seed)
{
    std::vector<u128> out;
    if (total <= budget) {
        out.resize(static_cast<std::size_t>(total));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
        return out;
    }
    Rng rng(seed);
    if (total <= u128{budget} * 64) {
        for (std::size_t i : sample_indices(static_cast<std::size_t>(total), budget, rng)) out.push_back(i);
        return out;
    }
    return distinct_draws<u128>(budget, [&] { return rng.below128(total); });
}

struct Accepted {
    std::vector<uint32_t> children;
    SemValue value;
};

}  // namespace

std::vector<std::size_t> prune_indices(std::size_t n, std::size_t k, uint64_t seed)
{
    Rng rng(seed);
    return sample_indices(n, k, rng);
}

// ---------------------------------------------------------------------------
// Derivation tables

std::span<const Derivation> DerivationTables::up_to(int nt, int d) const
{
    const auto& ends = depth_end_[static_cast<std::size_t>(nt)];
    if (d < 0 || ends.empty()) return {};
    std::size_t end = ends[static_cast<std::size_t>(std::min<int>(d, static_cast<int>(ends.size()) - 1))];
    return {tables_[static_cast<std::size_t>(nt)].data(), end};
}

DerivationTables::DerivationTables(const BoundGrammar& bg, const ExpansionParams& params, ExecPolicy policy)
    : bg_(&bg), params_(params)
{
    if (params.pruning_size == 0) throw Error("pruning size must be at least 1");
    if (params.max_depth < 0) throw Error("max depth must be non-negative");
    const auto& nts = bg.nonterminals();
    const auto& prods = bg.productions();
    tables_.resize(nts.size());
    depth_end_.resize(nts.size());
    const std::size_t budget = params.budget();

    for (int d = 0; d <= params.max_depth; ++d) {
        struct Task {
            std::size_t nt;
            int production;
        };
        std::vector<Task> tasks;
        for (std::size_t n = 0; n < nts.size(); ++n)
            for (int p : nts[n].productions)
                if (prods[static_cast<std::size_t>(p)].all_literal == (d == 0)) tasks.push_back({n, p});

        std::vector<std::vector<Accepted>> results(tasks.size());
        std::vector<std::size_t> evals(tasks.size(), 0);

        for_each_index(tasks.size(), policy, [&](std::size_t ti) {
            const BoundProduction& bp = prods[static_cast<std::size_t>(tasks[ti].production)];
            auto& acc = results[ti];
            if (d == 0) {
                evals[ti] = 1;
                if (bp.literal_value) acc.push_back({{}, *bp.literal_value});
                return;
            }
            const std::size_t k = bp.capture_nts.size();
            // Child ranges: depth <= d-2, exactly d-1, and <= d-1.
            std::vector<std::size_t> lo(k), eq_begin(k), eq(k), le(k);
            for (std::size_t i = 0; i < k; ++i) {
                const auto& ends = depth_end_[static_cast<std::size_t>(bp.capture_nts[i])];
                std::size_t e1 = ends[static_cast<std::size_t>(d - 1)];
                std::size_t e2 = d >= 2 ? ends[static_cast<std::size_t>(d - 2)] : 0;
                lo[i] = e2;
                eq_begin[i] = e2;
                eq[i] = e1 - e2;
                le[i] = e1;
            }
            // Block j: the first child at depth d-1 is child j.
            std::vector<u128> block_start(k + 1, 0);
            for (std::size_t j = 0; j < k; ++j) {
                u128 size = eq[j];
                for (std::size_t i = 0; i < k; ++i)
                    if (i != j) size = sat_mul(size, i < j ? lo[i] : le[i]);
                block_start[j + 1] = std::min(block_start[j] + size, kSaturate);
            }
            const u128 total = block_start[k];
            if (total == 0) return;
            auto picks = choose(total, budget,
                                mix_seed(params.rng_seed, mix_seed(tasks[ti].nt, static_cast<uint64_t>(d)),
                                         static_cast<uint64_t>(tasks[ti].production)));
            evals[ti] = picks.size();

            std::vector<uint32_t> tuple(k);
            std::vector<const SemValue*> caps(k);
            std::size_t j = 0;
            for (u128 idx : picks) {
                while (idx >= block_start[j + 1]) ++j;
                u128 local = idx - block_start[j];
                for (std::size_t ii = k; ii-- > 0;) {
                    std::size_t radix = ii < j ? lo[ii] : ii == j ? eq[ii] : le[ii];
                    std::size_t base = ii == j ? eq_begin[ii] : 0;
                    tuple[ii] = static_cast<uint32_t>(base + static_cast<std::size_t>(local % radix));
                    local /= radix;
                }
                for (std::size_t i = 0; i < k; ++i)
                    caps[i] = &tables_[static_cast<std::size_t>(bp.capture_nts[i])][tuple[i]].value;
                bool ok = true;
                for (const auto& g : bp.action.guards)
                    if (!eval_guard(g, {}, caps)) {
                        ok = false;
                        break;
                    }
                if (!ok) continue;
                std::optional<SemValue> v =
                    bp.action.result ? eval_expr(*bp.action.result, caps) : SemValue::make_set({});
                if (!v) continue;
                acc.push_back({tuple, std::move(*v)});
            }
            std::sort(acc.begin(), acc.end(),
                      [](const Accepted& a, const Accepted& b) { return a.children < b.children; });
        });

        for (std::size_t e : evals) evaluations_ += e;

        std::size_t t0 = 0;
        for (std::size_t n = 0; n < nts.size(); ++n) {
            std::size_t t1 = t0;
            std::size_t count = 0;
            while (t1 < tasks.size() && tasks[t1].nt == n) count += results[t1++].size();
            std::vector<std::size_t> keep;
            if (count > params.pruning_size)
                keep = prune_indices(count, params.pruning_size, mix_seed(params.rng_seed, mix_seed(n, d), kPruneTag));
            auto& table = tables_[n];
            const std::size_t first_new = table.size();
            std::size_t flat = 0, kp = 0;
            for (std::size_t t = t0; t < t1; ++t) {
                for (auto& a : results[t]) {
                    bool take = keep.empty() || (kp < keep.size() && keep[kp] == flat);
                    if (!keep.empty() && take) ++kp;
                    ++flat;
                    if (!take) continue;
                    Derivation dv;
                    dv.production = tasks[t].production;
                    dv.depth = d;
                    dv.children = std::move(a.children);
                    dv.value = std::move(a.value);
                    table.push_back(std::move(dv));
                }
                results[t].clear();
                results[t].shrink_to_fit();
            }
            t0 = t1;

            for_each_index(table.size() - first_new, policy, [&](std::size_t r) {
                Derivation& dv = table[first_new + r];
                const BoundProduction& bp = prods[static_cast<std::size_t>(dv.production)];
                if (bp.all_literal) {
                    dv.surface = bp.literal_surface;
                    return;
                }
                for (const auto& it : bp.rhs) {
                    if (it.literal)
                        append_surface(dv.surface, it.text);
                    else
                        append_surface(dv.surface,
                                       tables_[static_cast<std::size_t>(it.nt)][dv.children[static_cast<std::size_t>(it.capture)]].surface);
                }
            });
            depth_end_[n].push_back(table.size());
        }
    }
}

std::vector<Derivation> expand_nonterminal(const BoundGrammar& bg, std::string_view nt, const ExpansionParams& params,
                                           ExecPolicy policy)
{
    int idx = bg.find_nonterminal(nt);
    if (idx < 0) throw Error("unknown non-terminal " + std::string(nt));
    DerivationTables tables(bg, params, policy);
    auto t = tables.table(idx);
    return {t.begin(), t.end()};
}

// ---------------------------------------------------------------------------
// Turn plans

void TurnPlans::add(std::size_t tmpl, std::span<const uint32_t> children)
{
    offsets_.push_back(data_.size());
    data_.push_back(static_cast<uint32_t>(tmpl));
    data_.insert(data_.end(), children.begin(), children.end());
}

void TurnPlans::append(const TurnPlans& other)
{
    for (std::size_t i = 0; i < other.size(); ++i) add(other.template_index(i), other.children(i));
}

TurnPlans TurnPlans::select(std::span<const std::size_t> indices) const
{
    TurnPlans out;
    for (std::size_t i : indices) out.add(template_index(i), children(i));
    return out;
}

namespace {

// Template captures never go deeper than max_depth - 1.
ExpansionParams capture_params(ExpansionParams p)
{
    if (p.max_depth > 0) --p.max_depth;
    return p;
}

}  // namespace

TurnExpander::TurnExpander(const BoundGrammar& bg, const ExpansionParams& params, ExecPolicy policy)
    : params_(params), tables_(bg, capture_params(params), policy)
{
}

TurnPlans TurnExpander::plan(std::size_t transition, const ConcreteState& state, uint64_t seed, bool prune) const
{
    const BoundGrammar& bg = tables_.grammar();
    const ExpansionParams& params = params_;
    TurnPlans out;
    std::vector<std::size_t> tmpl_ids(bg.templates_for(transition).begin(), bg.templates_for(transition).end());
    for (std::size_t ti : tmpl_ids) {
        const TurnTemplate& t = bg.templates()[ti];
        const std::size_t k = t.capture_nts.size();
        std::vector<const SemValue*> caps(k, nullptr);

        bool ok = true;
        for (int g : t.state_guards) ok = ok && eval_guard(t.action.guards[static_cast<std::size_t>(g)], state.slots, caps);
        if (!ok) continue;

        std::vector<std::vector<uint32_t>> lists(k);
        u128 total = 1;
        for (std::size_t c = 0; c < k && total > 0; ++c) {
            auto cands = tables_.up_to(t.capture_nts[c], params.max_depth - 1);
            auto& list = lists[c];
            for (std::size_t i = 0; i < cands.size(); ++i) {
                caps[c] = &cands[i].value;
                bool pass = true;
                for (int g : t.unary_guards[c])
                    if (!eval_guard(t.action.guards[static_cast<std::size_t>(g)], state.slots, caps)) {
                        pass = false;
                        break;
                    }
                if (pass) list.push_back(static_cast<uint32_t>(i));
            }
            caps[c] = nullptr;
            total = sat_mul(total, list.size());
        }
        if (total == 0) continue;

        auto picks = choose(total, params.budget(), mix_seed(seed, ti));
        std::vector<uint32_t> tuple(k);
        for (u128 idx : picks) {
            for (std::size_t c = k; c-- > 0;) {
                std::size_t radix = lists[c].size();
                tuple[c] = lists[c][static_cast<std::size_t>(idx % radix)];
                idx /= radix;
                caps[c] = &tables_.table(t.capture_nts[c])[tuple[c]].value;
            }
            bool pass = true;
            for (int g : t.nary_guards)
                if (!eval_guard(t.action.guards[static_cast<std::size_t>(g)], state.slots, caps)) {
                    pass = false;
                    break;
                }
            if (pass) out.add(ti, tuple);
        }
    }
    if (prune && out.size() > params.pruning_size)
        out = out.select(prune_indices(out.size(), params.pruning_size, mix_seed(seed, kPruneTag)));
    return out;
}

TurnCandidate TurnExpander::realize(const TurnPlans& plans, std::size_t i, const ConcreteState& state) const
{
    const BoundGrammar& bg = tables_.grammar();
    const TurnTemplate& t = bg.templates()[plans.template_index(i)];
    auto children = plans.children(i);
    std::vector<const SemValue*> caps(children.size());
    for (std::size_t c = 0; c < children.size(); ++c) caps[c] = &tables_.table(t.capture_nts[c])[children[c]].value;

    auto next = eval_action(t.action, state, caps);
    if (!next) throw std::logic_error("planned turn rejected on realization: " + t.id);

    auto render = [&](const std::vector<BoundItem>& items) {
        std::string s;
        for (const auto& it : items) {
            if (it.literal)
                append_surface(s, it.text);
            else
                append_surface(s, tables_.table(it.nt)[children[static_cast<std::size_t>(it.capture)]].surface);
        }
        return fix_articles(s);
    };

    TurnCandidate tc;
    tc.transition_id = bg.model().transitions()[t.transition].id;
    tc.template_id = t.id;
    tc.agent_utterance = render(t.agent);
    tc.user_utterance = render(t.user);
    tc.new_state = std::move(*next);
    for (std::size_t c = 0; c < children.size(); ++c) tc.captures.emplace(t.capture_names[c], *caps[c]);
    return tc;
}

std::vector<TurnCandidate> TurnExpander::expand(const Transition& t, const ConcreteState& state) const
{
    const DialogueModel& model = tables_.grammar().model();
    const Transition* tr = model.find_transition(t.id);
    if (!tr) throw Error("transition " + t.id + " is not part of the bound model");
    if (state.abstract != tr->from_state)
        throw Error("state " + state.abstract + " does not enable transition " + t.id);
    const std::size_t idx = static_cast<std::size_t>(tr - model.transitions().data());
    TurnPlans plans = plan(idx, state, mix_seed(params_.rng_seed, idx));
    std::vector<TurnCandidate> out;
    out.reserve(plans.size());
    for (std::size_t i = 0; i < plans.size(); ++i) out.push_back(realize(plans, i, state));
    return out;
}

std::vector<TurnCandidate> expand_turn(const BoundGrammar& bg, const Transition& t, const ConcreteState& state,
                                       const ExpansionParams& params, ExecPolicy policy)
{
    TurnExpander ex(bg, params, policy);
    return ex.expand(t, state);
}

}  // namespace dialsynth

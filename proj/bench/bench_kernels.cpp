// Serial reference kernels against their OpenMP versions.
// Arg 0 runs the serial policy, arg 1 the parallel one.

#include <benchmark/benchmark.h>

#include "dialsynth/adapt.hpp"
#include "dialsynth/dataset.hpp"
#include "dialsynth/expander.hpp"
#include "dialsynth/synthesizer.hpp"

using namespace dialsynth;

namespace {

std::string data(const std::string& rel) { return std::string(DIALSYNTH_DATA_DIR) + "/" + rel; }

struct Inputs {
    DialogueModel model = load_model_file(data("models/transaction.json"));
    Ontology ontology = load_ontology_file(data("ontology/ontology.json"));
    BoundGrammar grammar =
        bind_ontology(parse_templates(load_template_dir(data("templates"), "restaurant")), model, ontology, "restaurant");
    DomainMapping mapping = load_mapping_file(data("mappings/restaurant_to_hotel.json"));
    DialogueCorpus corpus;

    Inputs()
    {
        SynthesisParams p;
        p.seed = 3;
        p.working_set_size = 2000;
        p.first_turn = {6, 2000, 0, 10};
        p.later_turns = {5, 200, 0, 10};
        corpus = synthesize(model, grammar, p);
        mapping.slot_map["food"] = "stars";
        mapping.slot_map["book_time"] = "book_stay";
        mapping.value_policy = ValuePolicy::resample_from_target;
    }
};

const Inputs& inputs()
{
    static const Inputs in;
    return in;
}

ExecPolicy policy(const benchmark::State& s) { return s.range(0) ? ExecPolicy::parallel : ExecPolicy::serial; }

void BM_DerivationTables(benchmark::State& state)
{
    const auto& in = inputs();
    ExpansionParams p{6, 5000, 0, 10};
    for (auto _ : state) {
        DerivationTables t(in.grammar, p, policy(state));
        benchmark::DoNotOptimize(t.evaluations());
    }
}

void BM_Synthesize(benchmark::State& state)
{
    const auto& in = inputs();
    SynthesisParams p;
    p.seed = 5;
    p.working_set_size = 1000;
    p.first_turn = {6, 2000, 0, 10};
    p.later_turns = {5, 200, 0, 10};
    p.policy = policy(state);
    Synthesizer synth(in.model, in.grammar, p);
    for (auto _ : state) {
        auto c = synth.run();
        benchmark::DoNotOptimize(c.dialogues.size());
    }
}

void BM_ComputeStats(benchmark::State& state)
{
    const auto& in = inputs();
    for (auto _ : state) {
        auto r = compute_stats(in.corpus, in.model, policy(state));
        benchmark::DoNotOptimize(r.turn_count);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(in.corpus.dialogues.size()));
}

void BM_AdaptCorpus(benchmark::State& state)
{
    const auto& in = inputs();
    for (auto _ : state) {
        auto r = adapt_corpus(in.corpus.dialogues, in.mapping, in.ontology, 7, policy(state));
        benchmark::DoNotOptimize(r.size());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(in.corpus.dialogues.size()));
}

}  // namespace

BENCHMARK(BM_DerivationTables)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Synthesize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ComputeStats)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AdaptCorpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();

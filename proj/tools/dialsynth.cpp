#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include "CLI11.hpp"

#include "dialsynth/adapt.hpp"
#include "dialsynth/dataset.hpp"
#include "dialsynth/grammar.hpp"
#include "dialsynth/model.hpp"
#include "dialsynth/ontology.hpp"
#include "dialsynth/synthesizer.hpp"

using namespace dialsynth;
namespace fs = std::filesystem;

namespace {

struct Common {
    int threads = 0;
    bool serial = false;
    bool quiet = false;
    bool allow_unreachable = false;
    std::size_t pool_size = 50;

    ExecPolicy policy() const { return serial ? ExecPolicy::serial : ExecPolicy::parallel; }
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app->add_flag("--serial", c.serial, "Use the serial reference kernels");
    app->add_flag("-q,--quiet", c.quiet, "Only print errors");
    app->add_flag("--allow-unreachable", c.allow_unreachable, "Demote unreachable model states to warnings");
    app->add_option("--pool-size", c.pool_size, "Sample pool size for non-categorical slots")->check(CLI::PositiveNumber);
}

void require_file(const std::string& path, const char* what)
{
    if (!fs::exists(path)) throw Error(std::string(what) + " not found: " + path);
}

void warn(const Common& c, const std::vector<std::string>& ws)
{
    if (c.quiet) return;
    for (const auto& w : ws) std::cerr << "warning: " << w << '\n';
}

DialogueModel load_model_checked(const std::string& path, const Common& c)
{
    require_file(path, "model");
    std::vector<std::string> ws;
    auto m = load_model_file(path, {c.allow_unreachable}, &ws);
    warn(c, ws);
    return m;
}

Ontology load_ontology_checked(const std::string& path, const Common& c)
{
    require_file(path, "ontology");
    std::vector<std::string> ws;
    auto o = load_ontology_file(path, {c.pool_size}, &ws);
    warn(c, ws);
    return o;
}

void write_json(const nlohmann::ordered_json& j, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failure on " + path);
}

void write_multiwoz(const DialogueCorpus& c, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    emit_multiwoz(c, out);
}

PruningScope parse_scope(const std::string& s)
{
    if (s == "per-transition") return PruningScope::per_transition;
    if (s == "per-context") return PruningScope::per_context;
    throw Error("unknown pruning scope \"" + s + "\"");
}

TruncationPolicy parse_truncation(const std::string& s)
{
    if (s == "balanced") return TruncationPolicy::balanced;
    if (s == "uniform") return TruncationPolicy::uniform;
    throw Error("unknown truncation policy \"" + s + "\"");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string model, templates, ontology, domain, out;
    SynthesisParams params;
    std::optional<double> sample;
    std::optional<uint64_t> sample_seed;
    std::string scope = "per-transition";
    std::string truncation = "balanced";
};

int cmd_synth(SynthArgs& a, const Common& c)
{
    const DialogueModel model = load_model_checked(a.model, c);
    const Ontology ont = load_ontology_checked(a.ontology, c);
    const Grammar g = parse_templates(load_template_dir(a.templates, a.domain));
    std::vector<std::string> ws;
    const BoundGrammar bg = bind_ontology(g, model, ont, a.domain, &ws);
    warn(c, ws);

    a.params.pruning_scope = parse_scope(a.scope);
    a.params.truncation = parse_truncation(a.truncation);
    a.params.policy = c.policy();
    SynthesisTrace trace;
    DialogueCorpus corpus = synthesize(model, bg, a.params, &trace);
    if (a.sample) corpus = sample_corpus(corpus, *a.sample, a.sample_seed.value_or(a.params.seed));

    fs::create_directories(a.out);
    write_native_file(corpus, (fs::path(a.out) / "dialogues.jsonl").string());
    write_multiwoz(corpus, (fs::path(a.out) / "multiwoz.json").string());
    nlohmann::ordered_json meta = corpus.metadata;
    meta["stalled_discarded"] = trace.stalled_discarded;
    meta["stalled_completed"] = trace.stalled_completed;
    meta["max_working_set"] = trace.working_set_sizes.empty()
                                  ? 0
                                  : *std::max_element(trace.working_set_sizes.begin(), trace.working_set_sizes.end());
    write_json(meta, (fs::path(a.out) / "metadata.json").string());

    if (!c.quiet) std::cerr << compute_stats(corpus, model, c.policy()).summary();
    return 0;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
    std::string input, model, templates, ontology;
};

int cmd_validate(const ValidateArgs& a, const Common& c)
{
    const DialogueModel model = load_model_checked(a.model, c);
    require_file(a.input, "input");
    DialogueCorpus corpus = read_native_file(a.input);

    std::optional<Ontology> ont;
    std::optional<Grammar> g;
    if (!a.templates.empty()) {
        if (a.ontology.empty()) throw Error("--templates needs --ontology");
        ont = load_ontology_checked(a.ontology, c);
    }
    std::map<std::string, std::unique_ptr<BoundGrammar>> grammars;
    auto grammar_for = [&](const std::string& domain) -> const BoundGrammar* {
        if (!ont) return nullptr;
        std::string first = domain.substr(0, domain.find('+'));
        auto it = grammars.find(first);
        if (it != grammars.end()) return it->second.get();
        std::unique_ptr<BoundGrammar> bg;
        if (ont->find_domain(first)) {
            Grammar gr = parse_templates(load_template_dir(a.templates, first));
            bg = std::make_unique<BoundGrammar>(bind_ontology(gr, model, *ont, first));
        }
        return grammars.emplace(first, std::move(bg)).first->second.get();
    };

    std::size_t bad = 0, violations = 0, replayed = 0, skipped = 0;
    for (const auto& d : corpus.dialogues) {
        ValidationReport r = validate_dialogue(model, grammar_for(d.domain), d);
        replayed += r.replayed_turns;
        skipped += r.skipped_turns;
        if (!r.ok()) ++bad;
        violations += r.violations.size();
        for (const auto& v : r.violations)
            std::cerr << d.id << ": turn " << v.turn << ": condition " << v.condition << ": " << v.message << '\n';
    }
    if (!c.quiet) {
        std::cerr << corpus.dialogues.size() << " dialogues, " << bad << " with violations, " << violations
                  << " violations; " << replayed << " turns replayed, " << skipped << " skipped\n";
    }
    return violations == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct AdaptArgs {
    std::string input, mapping, ontology, out;
    uint64_t seed = 0;
};

int cmd_adapt(const AdaptArgs& a, const Common& c)
{
    const Ontology ont = load_ontology_checked(a.ontology, c);
    require_file(a.mapping, "mapping");
    const DomainMapping m = load_mapping_file(a.mapping);
    check_mapping(m, ont);
    require_file(a.input, "input");
    DialogueCorpus in = read_native_file(a.input);

    auto results = adapt_corpus(in.dialogues, m, ont, a.seed, c.policy());
    DialogueCorpus out;
    std::map<std::string, std::size_t> reasons;
    for (auto& r : results) {
        if (r.adapted())
            out.dialogues.push_back(std::move(*r.dialogue));
        else
            ++reasons[r.skip_reason];
    }
    write_native_file(out, a.out);
    if (!c.quiet) {
        std::cerr << "adapted " << out.dialogues.size() << ", skipped " << in.dialogues.size() - out.dialogues.size()
                  << '\n';
        for (const auto& [why, n] : reasons) std::cerr << "  " << n << " x " << why << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ConcatArgs {
    std::string first, second, model, out;
};

int cmd_concat(const ConcatArgs& a, const Common& c)
{
    const DialogueModel model = load_model_checked(a.model, c);
    require_file(a.first, "input");
    require_file(a.second, "input");
    DialogueCorpus d1 = read_native_file(a.first);
    DialogueCorpus d2 = read_native_file(a.second);
    const std::size_t n = std::min(d1.dialogues.size(), d2.dialogues.size());
    for (std::size_t i = 0; i < n; ++i)
        if (d1.dialogues[i].domain == d2.dialogues[i].domain)
            throw Error("cannot concatenate dialogues of the same domain \"" + d1.dialogues[i].domain + "\" (" +
                        d1.dialogues[i].id + ", " + d2.dialogues[i].id + ")");
    DialogueCorpus out;
    std::map<std::string, std::size_t> reasons;
    for (std::size_t i = 0; i < n; ++i) {
        try {
            out.dialogues.push_back(concat_multi_domain(d1.dialogues[i], d2.dialogues[i], model));
        } catch (const Error& e) {
            ++reasons[e.what()];
        }
    }
    write_native_file(out, a.out);
    if (!c.quiet) {
        std::cerr << "concatenated " << out.dialogues.size() << " of " << n << " pairs\n";
        for (const auto& [why, k] : reasons) std::cerr << "  skipped: " << why << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
    std::string input, model, ontology, domain, json;
};

int cmd_stats(const StatsArgs& a, const Common& c)
{
    const DialogueModel model = load_model_checked(a.model, c);
    require_file(a.input, "input");
    DialogueCorpus corpus = read_native_file(a.input);
    StatsReport r = compute_stats(corpus, model, c.policy());
    std::cout << r.summary();
    nlohmann::ordered_json j = r.to_json();
    if (!a.ontology.empty()) {
        if (a.domain.empty()) throw Error("--ontology needs --domain");
        const Ontology ont = load_ontology_checked(a.ontology, c);
        auto missing = uncovered_categorical_values(r, ont, a.domain);
        std::cout << "uncovered categorical values: " << missing.size() << '\n';
        for (const auto& [s, v] : missing) std::cout << "  " << s << " = " << v << '\n';
        nlohmann::ordered_json mj = nlohmann::ordered_json::array();
        for (const auto& [s, v] : missing) mj.push_back({s, v});
        j["uncovered_categorical_values"] = std::move(mj);
    }
    if (!a.json.empty()) write_json(j, a.json);
    return 0;
}

// ---------------------------------------------------------------------------

struct MixArgs {
    std::vector<std::string> parts;
    std::string out, metadata;
};

int cmd_mix(const MixArgs& a, const Common&)
{
    std::vector<DialogueCorpus> corpora;
    std::vector<MixPart> parts;
    corpora.reserve(a.parts.size());
    for (const auto& spec : a.parts) {
        // FILE:FRACTION[:SEED[:LABEL]]
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= spec.size(); ++i)
            if (i == spec.size() || spec[i] == ':') {
                f.push_back(spec.substr(start, i - start));
                start = i + 1;
            }
        if (f.size() < 2 || f.size() > 4) throw Error("bad --part \"" + spec + "\"; expected FILE:FRACTION[:SEED[:LABEL]]");
        require_file(f[0], "input");
        MixPart p;
        try {
            p.fraction = std::stod(f[1]);
            p.seed = f.size() > 2 ? std::stoull(f[2]) : 0;
        } catch (const std::exception&) {
            throw Error("bad number in --part \"" + spec + "\"");
        }
        p.label = f.size() > 3 ? f[3] : f[0];
        corpora.push_back(read_native_file(f[0]));
        parts.push_back(p);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) parts[i].corpus = &corpora[i];
    DialogueCorpus out = mix(parts);
    write_native_file(out, a.out);
    if (!a.metadata.empty()) write_json(out.metadata, a.metadata);
    return 0;
}

struct SampleArgs {
    std::string input, out;
    double fraction = 1.0;
    uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a, const Common&)
{
    require_file(a.input, "input");
    DialogueCorpus in = read_native_file(a.input);
    write_native_file(sample_corpus(in, a.fraction, a.seed), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Synthesize annotated task-oriented dialogue corpora"};
    app.require_subcommand(1);
    Common common;

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Synthesize a corpus for one domain");
    synth->add_option("--model", sa.model, "Dialogue model JSON")->required();
    synth->add_option("--templates", sa.templates, "Template directory")->required();
    synth->add_option("--ontology", sa.ontology, "Ontology JSON")->required();
    synth->add_option("--domain", sa.domain, "Domain to synthesize")->required();
    synth->add_option("-o,--out", sa.out, "Output directory")->required();
    synth->add_option("--seed", sa.params.seed, "Random seed");
    synth->add_option("--max-turns", sa.params.max_turns, "Maximum turns per dialogue")->check(CLI::PositiveNumber);
    synth->add_option("--working-set", sa.params.working_set_size, "Working set size")->check(CLI::PositiveNumber);
    synth->add_option("--transitions-per-iteration", sa.params.transitions_per_iteration,
                      "Pairs expanded per iteration (0 = working set size)");
    synth->add_option("--first-turn-depth", sa.params.first_turn.max_depth, "Max depth for the first turn");
    synth->add_option("--first-turn-pruning", sa.params.first_turn.pruning_size, "Pruning size for the first turn")
        ->check(CLI::PositiveNumber);
    synth->add_option("--max-depth", sa.params.later_turns.max_depth, "Max depth for later turns");
    synth->add_option("--pruning", sa.params.later_turns.pruning_size, "Pruning size for later turns")
        ->check(CLI::PositiveNumber);
    synth->add_option_function<std::size_t>(
             "--budget-factor",
             [&](std::size_t f) { sa.params.first_turn.budget_factor = sa.params.later_turns.budget_factor = f; },
             "Evaluation cap as a multiple of the pruning size (default 10)")
        ->check(CLI::PositiveNumber);
    synth->add_option("--target-size", sa.params.target_size, "Run minibatches until this many dialogues exist");
    synth->add_option("--sample", sa.sample, "Emit only this fraction of the corpus")->check(CLI::Range(0.0, 1.0));
    synth->add_option("--sample-seed", sa.sample_seed, "Seed for --sample (default: --seed)");
    synth->add_flag("--keep-stalled", sa.params.keep_stalled, "Complete stalled dialogues with a closing turn");
    synth->add_option("--pruning-scope", sa.scope, "per-transition or per-context");
    synth->add_option("--truncation", sa.truncation, "balanced or uniform");
    add_common(synth, common);

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Check dialogues against the model (and templates)");
    validate->add_option("input", va.input, "Native corpus (JSON lines)")->required();
    validate->add_option("--model", va.model, "Dialogue model JSON")->required();
    validate->add_option("--templates", va.templates, "Template directory, enables action replay");
    validate->add_option("--ontology", va.ontology, "Ontology JSON");
    add_common(validate, common);

    AdaptArgs aa;
    auto* adapt = app.add_subcommand("adapt", "Rewrite dialogues into another domain");
    adapt->add_option("input", aa.input, "Native corpus")->required();
    adapt->add_option("--mapping", aa.mapping, "Domain mapping JSON")->required();
    adapt->add_option("--ontology", aa.ontology, "Ontology JSON")->required();
    adapt->add_option("--seed", aa.seed, "Random seed");
    adapt->add_option("-o,--out", aa.out, "Output corpus")->required();
    add_common(adapt, common);

    ConcatArgs ca;
    auto* concat = app.add_subcommand("concat", "Splice dialogues of two domains pairwise");
    concat->add_option("first", ca.first, "Corpus providing the first domain")->required();
    concat->add_option("second", ca.second, "Corpus providing the second domain")->required();
    concat->add_option("--model", ca.model, "Dialogue model JSON")->required();
    concat->add_option("-o,--out", ca.out, "Output corpus")->required();
    add_common(concat, common);

    StatsArgs sta;
    auto* stats = app.add_subcommand("stats", "Print corpus statistics");
    stats->add_option("input", sta.input, "Native corpus")->required();
    stats->add_option("--model", sta.model, "Dialogue model JSON")->required();
    stats->add_option("--ontology", sta.ontology, "Ontology JSON, enables value coverage");
    stats->add_option("--domain", sta.domain, "Domain for value coverage");
    stats->add_option("--json", sta.json, "Also write the report as JSON");
    add_common(stats, common);

    MixArgs ma;
    auto* mixc = app.add_subcommand("mix", "Concatenate samples of several corpora");
    mixc->add_option("--part", ma.parts, "FILE:FRACTION[:SEED[:LABEL]]")->required();
    mixc->add_option("-o,--out", ma.out, "Output corpus")->required();
    mixc->add_option("--metadata", ma.metadata, "Write mix metadata JSON here");
    add_common(mixc, common);

    SampleArgs sma;
    auto* sample = app.add_subcommand("sample", "Uniformly sample a corpus");
    sample->add_option("input", sma.input, "Native corpus")->required();
    sample->add_option("--fraction", sma.fraction, "Fraction in (0, 1]")->required();
    sample->add_option("--seed", sma.seed, "Random seed");
    sample->add_option("-o,--out", sma.out, "Output corpus")->required();
    add_common(sample, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (common.threads > 0) set_thread_count(common.threads);
        if (*synth) return cmd_synth(sa, common);
        if (*validate) return cmd_validate(va, common);
        if (*adapt) return cmd_adapt(aa, common);
        if (*concat) return cmd_concat(ca, common);
        if (*stats) return cmd_stats(sta, common);
        if (*mixc) return cmd_mix(ma, common);
        if (*sample) return cmd_sample(sma, common);
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "doctest.h"
#include "test_support.hpp"

using namespace dialsynth;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

const fs::path& work()
{
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("dialsynth_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Result run(const std::string& args)
{
    static int n = 0;
    fs::path out = work() / ("out" + std::to_string(n) + ".txt");
    fs::path err = work() / ("err" + std::to_string(n++) + ".txt");
    std::string cmd = std::string(DIALSYNTH_CLI) + " " + args + " >" + q(out) + " 2>" + q(err);
    int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out.string());
    r.err = slurp(err.string());
    return r;
}

std::string inputs()
{
    return "--model " + q(data("models/transaction.json")) + " --templates " + q(data("templates")) + " --ontology " +
           q(data("ontology/ontology.json"));
}

std::string small_synth(const fs::path& out, uint64_t seed)
{
    return "synth " + inputs() + " --domain restaurant --seed " + std::to_string(seed) +
           " --working-set 200 --first-turn-depth 5 --first-turn-pruning 300 --max-depth 4 --pruning 40"
           " --budget-factor 4 -o " +
           q(out);
}

// One small corpus shared by the tests below.
const fs::path& corpus_dir()
{
    static const fs::path dir = [] {
        fs::path d = work() / "syn";
        Result r = run(small_synth(d, 42));
        if (r.code != 0) throw std::runtime_error("synth failed: " + r.err);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth twice with one seed gives byte-identical outputs")
{
    fs::path a = corpus_dir();
    fs::path b = work() / "syn_again";
    Result r = run(small_synth(b, 42) + " --serial");
    REQUIRE(r.code == 0);
    for (const char* f : {"dialogues.jsonl", "multiwoz.json", "metadata.json"}) {
        INFO(f);
        CHECK(slurp((a / f).string()) == slurp((b / f).string()));
        CHECK_FALSE(slurp((a / f).string()).empty());
    }
    CHECK(r.err.find("transitions covered:") != std::string::npos);

    fs::path c = work() / "syn_other";
    REQUIRE(run(small_synth(c, 43) + " -q").code == 0);
    CHECK(slurp((a / "dialogues.jsonl").string()) != slurp((c / "dialogues.jsonl").string()));
}

TEST_CASE("synth sample flag")
{
    fs::path full = corpus_dir();
    fs::path d = work() / "syn_sample";
    REQUIRE(run(small_synth(d, 42) + " -q --sample 0.5").code == 0);
    const std::size_t n = read_native_file((full / "dialogues.jsonl").string()).dialogues.size();
    const std::size_t k = read_native_file((d / "dialogues.jsonl").string()).dialogues.size();
    CHECK(k == static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(n))));
}

TEST_CASE("missing input files are named")
{
    fs::path missing = work() / "nowhere" / "ontology.json";
    Result r = run("synth --model " + q(data("models/transaction.json")) + " --templates " + q(data("templates")) +
                   " --ontology " + q(missing) + " --domain restaurant -o " + q(work() / "x"));
    CHECK(r.code == 1);
    CHECK(r.err.find(missing.string()) != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("bad flags and template errors")
{
    CHECK(run("").code == 1);
    CHECK(run("synth --domain restaurant").code == 1);
    CHECK(run("frobnicate").code == 1);

    fs::path tdir = work() / "bad_templates";
    fs::create_directories(tdir);
    std::ofstream(tdir / "bad.tmpl") << "rule X := \"a\";\nrule Y := Z;\n";
    Result r = run("synth --model " + q(data("models/transaction.json")) + " --templates " + q(tdir) + " --ontology " +
                   q(data("ontology/ontology.json")) + " --domain restaurant -o " + q(work() / "y"));
    CHECK(r.code == 1);
    CHECK(r.err.find("bad.tmpl:2:11") != std::string::npos);
}

TEST_CASE("validate exit codes")
{
    fs::path corpus = corpus_dir() / "dialogues.jsonl";
    Result ok = run("validate " + q(corpus) + " " + inputs());
    CHECK(ok.code == 0);
    CHECK(ok.err.find(" 0 violations") != std::string::npos);

    // Mutate the recorded end state of one dialogue's last turn.
    DialogueCorpus c = read_native_file(corpus.string());
    REQUIRE(c.dialogues.size() > 1);
    const std::size_t last = c.dialogues[1].turns.size() - 1;
    c.dialogues[1].turns[last].end_state.slots.set("zzz_extra", SlotValue::of("x"));
    fs::path bad = work() / "mutated.jsonl";
    write_native_file(c, bad.string());
    Result r = run("validate " + q(bad) + " " + inputs());
    CHECK(r.code == 1);
    CHECK(r.err.find("1 with violations, 1 violations") != std::string::npos);
    CHECK(r.err.find(c.dialogues[1].id + ": turn " + std::to_string(last) + ": condition 2") != std::string::npos);

    Result empty = run("validate " + q(fixture("empty.jsonl")) + " --model " + q(data("models/transaction.json")));
    CHECK(empty.code == 0);
    CHECK(empty.err.find("0 dialogues") != std::string::npos);

    Result malformed = run("validate " + q(fixture("malformed.jsonl")) + " --model " + q(data("models/transaction.json")));
    CHECK(malformed.code == 2);
    CHECK(malformed.err.find(":2") != std::string::npos);

    Result structural = run("validate " + q(fixture("city_center.jsonl")) + " --model " + q(data("models/transaction.json")));
    CHECK(structural.code == 0);
    CHECK(structural.err.find("skipped") != std::string::npos);
}

TEST_CASE("adapt reports skip reasons")
{
    fs::path out = work() / "hotel.jsonl";
    Result r = run("adapt " + q(corpus_dir() / "dialogues.jsonl") + " --mapping " +
                   q(data("mappings/restaurant_to_hotel.json")) + " --ontology " + q(data("ontology/ontology.json")) +
                   " --seed 3 -o " + q(out));
    CHECK(r.code == 0);
    CHECK(r.err.find("adapted ") != std::string::npos);
    CHECK(r.err.find("x unmapped slot: food") != std::string::npos);
    for (const auto& d : read_native_file(out.string()).dialogues) CHECK(d.domain == "hotel");

    fs::path city = work() / "city_hotel.jsonl";
    Result c = run("adapt " + q(fixture("city_center.jsonl")) + " --mapping " +
                   q(data("mappings/restaurant_to_hotel.json")) + " --ontology " + q(data("ontology/ontology.json")) +
                   " -o " + q(city));
    REQUIRE(c.code == 0);
    CHECK(read_one(city.string()).turns[0].user_utterance == "find me a hotel in the city center");
}

TEST_CASE("concat of one domain with itself fails")
{
    fs::path corpus = corpus_dir() / "dialogues.jsonl";
    Result r = run("concat " + q(corpus) + " " + q(corpus) + " --model " + q(data("models/transaction.json")) + " -o " +
                   q(work() / "cc.jsonl"));
    CHECK(r.code == 1);
}

TEST_CASE("concat of two domains")
{
    fs::path hotel = work() / "hotel_syn";
    REQUIRE(run("synth " + inputs() +
                " --domain hotel -q --seed 1 --working-set 200 --first-turn-depth 5 --first-turn-pruning 300"
                " --max-depth 4 --pruning 40 --budget-factor 4 -o " +
                q(hotel))
                .code == 0);
    fs::path out = work() / "rh.jsonl";
    Result r = run("concat " + q(corpus_dir() / "dialogues.jsonl") + " " + q(hotel / "dialogues.jsonl") + " --model " +
                   q(data("models/transaction.json")) + " -o " + q(out));
    REQUIRE(r.code == 0);
    auto multi = read_native_file(out.string());
    REQUIRE_FALSE(multi.dialogues.empty());
    for (const auto& d : multi.dialogues) CHECK(d.domain == "restaurant+hotel");
    Result v = run("validate " + q(out) + " " + inputs());
    CHECK(v.code == 0);
}

TEST_CASE("stats prints coverage")
{
    Result r = run("stats " + q(corpus_dir() / "dialogues.jsonl") + " --model " + q(data("models/transaction.json")) +
                   " --ontology " + q(data("ontology/ontology.json")) + " --domain restaurant --json " +
                   q(work() / "stats.json"));
    CHECK(r.code == 0);
    CHECK(r.out.find("transitions covered: ") != std::string::npos);
    CHECK(r.out.find("uncovered categorical values: ") != std::string::npos);
    auto j = nlohmann::json::parse(slurp((work() / "stats.json").string()));
    CHECK(j["dialogues"] == read_native_file((corpus_dir() / "dialogues.jsonl").string()).dialogues.size());
}

TEST_CASE("sample and mix")
{
    fs::path corpus = corpus_dir() / "dialogues.jsonl";
    const std::size_t n = read_native_file(corpus.string()).dialogues.size();
    fs::path s = work() / "sampled.jsonl";
    REQUIRE(run("sample " + q(corpus) + " --fraction 0.25 --seed 2 -o " + q(s)).code == 0);
    CHECK(read_native_file(s.string()).dialogues.size() == static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(n))));
    CHECK(run("sample " + q(corpus) + " --fraction 0 -o " + q(s)).code == 1);

    fs::path m = work() / "mixed.jsonl";
    fs::path meta = work() / "mixed_meta.json";
    Result r = run("mix --part " + q(corpus.string() + ":1.0:1:syn") + " --part " +
                   q(fixture("city_center.jsonl") + ":1.0") + " -o " + q(m) + " --metadata " + q(meta));
    REQUIRE(r.code == 0);
    CHECK(read_native_file(m.string()).dialogues.size() == n + 1);
    auto j = nlohmann::json::parse(slurp(meta.string()));
    CHECK(j["parts"][0]["label"] == "syn");
    CHECK(run("mix --part " + q(corpus.string() + ":abc") + " -o " + q(m)).code == 1);
}

#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "test_support.hpp"

using namespace dialsynth;
using namespace testsupport;
using nlohmann::json;

namespace {

SynthesisParams small_params(uint64_t seed)
{
    SynthesisParams p;
    p.seed = seed;
    p.working_set_size = 200;
    p.first_turn = {5, 300, 0, 4};
    p.later_turns = {4, 40, 0, 4};
    return p;
}

SynthesisParams unpruned(int first_depth)
{
    SynthesisParams p;
    p.working_set_size = 1000;
    p.first_turn = {first_depth, 100000, 0, 10};
    p.later_turns = {first_depth, 100000, 0, 10};
    return p;
}

std::string native_bytes(const DialogueCorpus& c)
{
    std::ostringstream os;
    emit_native(c, os);
    return os.str();
}

using Row = std::tuple<std::string, std::string, std::string, SlotSet>;

std::set<Row> rows(const DialogueCorpus& c)
{
    std::set<Row> out;
    for (const auto& d : c.dialogues) {
        REQUIRE(d.turns.size() == 1);
        const Turn& t = d.turns[0];
        out.insert({t.agent_utterance, t.user_utterance, t.end_state.abstract, t.end_state.slots});
    }
    return out;
}

// Brute force over the toy grammar: greetings times noun phrases with at most
// `max_adjectives` adjectives drawn from distinct slots, in either order.
std::set<Row> toy_oracle(int max_adjectives)
{
    const std::vector<std::pair<std::string, std::string>> adjs{
        {"color", "red"}, {"color", "blue"}, {"size", "small"}, {"size", "large"}};
    std::vector<std::pair<std::string, SlotSet>> nps{{"shop", {}}};
    if (max_adjectives >= 1)
        for (const auto& [s, v] : adjs) nps.push_back({v + " shop", {{s, SlotValue::of(v)}}});
    if (max_adjectives >= 2)
        for (const auto& [s1, v1] : adjs)
            for (const auto& [s2, v2] : adjs)
                if (s1 != s2) nps.push_back({v1 + " " + v2 + " shop", {{s1, SlotValue::of(v1)}, {s2, SlotValue::of(v2)}}});
    std::set<Row> out;
    for (const char* g : {"Hello.", "Hi."})
        for (const auto& [text, slots] : nps) out.insert({g, "I want a " + text + ".", "End", slots});
    return out;
}

// Model with a Start state enabling `k` transitions to End and two more
// states A and B with one transition each.
struct Fan {
    DialogueModel model;
    BoundGrammar grammar;

    explicit Fan(int k)
        : model(load_model(make_model(k))), grammar(make_grammar(model, k))
    {
    }

    static json make_model(int k)
    {
        json m{{"states", json::array({{{"name", "Start"}, {"start", true}},
                                       {{"name", "A"}},
                                       {{"name", "B"}},
                                       {{"name", "End"}, {"end", true}}})},
               {"acts", json::array({{{"name", "Say"}, {"speaker", "agent"}}, {{"name", "Reply"}, {"speaker", "user"}}})},
               {"transitions", json::array()}};
        auto add = [&](const std::string& id, const std::string& from, const std::string& to) {
            m["transitions"].push_back({{"id", id}, {"from", from}, {"agent_act", "Say"}, {"user_act", "Reply"}, {"to", to}});
        };
        for (int i = 1; i <= k; ++i) add("f" + std::to_string(i), "Start", "End");
        add("toA", "Start", "A");
        add("toB", "Start", "B");
        add("a", "A", "End");
        add("b", "B", "End");
        return m;
    }

    static BoundGrammar make_grammar(const DialogueModel& m, int /*k*/)
    {
        std::string src;
        for (const auto& t : m.transitions()) src += "turn x" + t.id + " on " + t.id + " := \"go\" \"<sep>\" \"ok\";\n";
        auto ont = load_ontology(json::parse(R"({"domains": {"d": {"subjects": ["x"], "slots": []}}})"));
        return bind_ontology(parse_one(src), m, ont, "d");
    }
};

void check_uniform(const std::map<std::string, std::size_t>& hist, std::size_t k, std::size_t n)
{
    REQUIRE(hist.size() == k);
    const double expected = static_cast<double>(n) / static_cast<double>(k);
    double chi2 = 0, max_rel = 0;
    for (const auto& [id, c] : hist) {
        const double diff = static_cast<double>(c) - expected;
        chi2 += diff * diff / expected;
        max_rel = std::max(max_rel, std::abs(diff) / expected);
    }
    boost::math::chi_squared dist(static_cast<double>(k - 1));
    const double critical = boost::math::quantile(boost::math::complement(dist, 0.01));
    INFO("chi2 " << chi2 << " critical " << critical << " max relative deviation " << max_rel);
    CHECK(chi2 < critical);
    CHECK(max_rel <= 0.05);
}

}  // namespace

TEST_CASE("toy corpus equals brute-force enumeration")
{
    Toy toy;
    CHECK(toy_oracle(2).size() == 26);
    for (int depth : {2, 3, 4, 5, 7}) {
        INFO("max_depth " << depth);
        auto corpus = synthesize(toy.model, toy.grammar, unpruned(depth));
        CHECK(rows(corpus) == toy_oracle(depth - 2));
        CHECK(corpus.dialogues.size() == toy_oracle(depth - 2).size());
    }
}

TEST_CASE("grammar with three turn candidates gives three one-turn dialogues")
{
    Toy toy;
    auto bg = bind_ontology(parse_one(R"(turn t on t1 := ("Hello." | "Hi." | "Hey.") "<sep>" "Bye.";)"), toy.model,
                            toy.ontology, "toy");
    auto corpus = synthesize(toy.model, bg, unpruned(3));
    std::set<Row> expect;
    for (const char* g : {"Hello.", "Hi.", "Hey."}) expect.insert({g, "Bye.", "End", {}});
    CHECK(rows(corpus) == expect);
    CHECK(corpus.dialogues.size() == 3);
}

TEST_CASE("dialogue ids follow emission order")
{
    Toy toy;
    auto corpus = synthesize(toy.model, toy.grammar, unpruned(5));
    REQUIRE(corpus.dialogues.size() == 26);
    CHECK(corpus.dialogues[0].id == "SYN-toy-000001");
    CHECK(corpus.dialogues[25].id == "SYN-toy-000026");
    CHECK(corpus.metadata["domain"] == "toy");
    CHECK(corpus.metadata["dialogues"] == 26);
}

TEST_CASE("max_turns below the shortest path gives an empty corpus")
{
    SynthesisParams p = small_params(1);
    p.max_turns = 1;
    SynthesisTrace trace;
    auto corpus = synthesize(default_model(), restaurant_grammar(), p, &trace);
    CHECK(corpus.dialogues.empty());
    CHECK(trace.stalled_discarded > 0);
}

TEST_CASE("synthesis input errors")
{
    Toy toy;
    SynthesisParams p = small_params(1);
    CHECK_THROWS_WITH_AS(synthesize(default_model(), toy.grammar, p), doctest::Contains("different dialogue model"), Error);
    std::vector<std::string> warnings;
    auto no_start = bind_ontology(parse_one(R"(turn x on t06 := "a" "<sep>" "b";)"), default_model(), default_ontology(),
                                  "restaurant", &warnings);
    CHECK_THROWS_WITH_AS(synthesize(default_model(), no_start, p), doctest::Contains("leaving Start"), Error);
    p.max_turns = 0;
    CHECK_THROWS_AS(synthesize(default_model(), restaurant_grammar(), p), Error);
}

TEST_CASE("property: synthesized restaurant dialogues are well formed and bounded")
{
    for (uint64_t seed : {1u, 2u, 3u}) {
        SynthesisParams p = small_params(seed);
        p.target_size = 100;
        SynthesisTrace trace;
        auto corpus = synthesize(default_model(), restaurant_grammar(), p, &trace);
        INFO("seed " << seed);
        REQUIRE(corpus.dialogues.size() == 100);
        for (std::size_t w : trace.working_set_sizes) CHECK(w <= p.working_set_size);
        CHECK(trace.working_set_sizes.size() <= static_cast<std::size_t>(p.max_turns) * trace.batches);
        for (const auto& d : corpus.dialogues) {
            CHECK(d.turns.size() <= 6);
            CHECK(d.turns.back().end_state.abstract == "End");
            auto r = validate_dialogue(default_model(), &restaurant_grammar(), d);
            CHECK(r.ok());
            CHECK(r.skipped_turns == 0);
            CHECK(r.replayed_turns == d.turns.size());
        }
    }
}

TEST_CASE("target size runs minibatches until reached")
{
    SynthesisParams p = small_params(4);
    p.target_size = 150;
    SynthesisTrace trace;
    auto corpus = synthesize(default_model(), restaurant_grammar(), p, &trace);
    CHECK(corpus.dialogues.size() == 150);
    CHECK(trace.batches >= 2);
    std::set<std::string> ids;
    for (const auto& d : corpus.dialogues) ids.insert(d.id);
    CHECK(ids.size() == 150);
}

TEST_CASE("keep_stalled completes stalled dialogues with a closing turn")
{
    SynthesisParams p = small_params(5);
    p.transitions_per_iteration = 20;
    p.keep_stalled = true;
    SynthesisTrace trace;
    auto corpus = synthesize(default_model(), restaurant_grammar(), p, &trace);
    CHECK(trace.stalled_completed > 0);
    for (const auto& d : corpus.dialogues) {
        CHECK(d.turns.size() <= 6);
        CHECK(validate_dialogue(default_model(), &restaurant_grammar(), d).ok());
    }
}

TEST_CASE("same seed gives identical corpora under both execution policies")
{
    SynthesisParams p = small_params(42);
    p.policy = ExecPolicy::serial;
    auto a = native_bytes(synthesize(default_model(), restaurant_grammar(), p));
    p.policy = ExecPolicy::parallel;
    auto b = native_bytes(synthesize(default_model(), restaurant_grammar(), p));
    auto c = native_bytes(synthesize(default_model(), restaurant_grammar(), p));
    CHECK(a == b);
    CHECK(b == c);
    p.seed = 43;
    CHECK(native_bytes(synthesize(default_model(), restaurant_grammar(), p)) != a);
}

TEST_CASE("other pruning scope and truncation settings stay well formed")
{
    SynthesisParams p = small_params(6);
    p.pruning_scope = PruningScope::per_context;
    p.truncation = TruncationPolicy::uniform;
    p.working_set_size = 100;
    SynthesisTrace trace;
    auto corpus = synthesize(default_model(), restaurant_grammar(), p, &trace);
    CHECK_FALSE(corpus.dialogues.empty());
    for (std::size_t w : trace.working_set_sizes) CHECK(w <= 100);
    for (const auto& d : corpus.dialogues) CHECK(validate_dialogue(default_model(), &restaurant_grammar(), d).ok());
}

TEST_CASE("property: allocation respects counts and capacity")
{
    Rng meta(17);
    for (int trial = 0; trial < 400; ++trial) {
        std::vector<std::size_t> counts(1 + meta.below(12));
        for (auto& c : counts) c = meta.below(30);
        const std::size_t capacity = meta.below(150);
        const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
        Rng r1(static_cast<uint64_t>(trial)), r2(static_cast<uint64_t>(trial));
        auto bal = allocate_balanced(counts, capacity, r1);
        auto uni = allocate_uniform(counts, capacity, r2);
        for (const auto* a : {&bal, &uni}) {
            REQUIRE(a->size() == counts.size());
            CHECK(std::accumulate(a->begin(), a->end(), std::size_t{0}) == std::min(capacity, total));
            for (std::size_t i = 0; i < counts.size(); ++i) CHECK((*a)[i] <= counts[i]);
        }
        // Balanced shares: an unsaturated pair is at most one below any other pair.
        const std::size_t top = *std::max_element(bal.begin(), bal.end());
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (bal[i] < counts[i]) CHECK(bal[i] + 1 >= top);
    }
}

TEST_CASE("select_pairs draws distinct ascending pairs")
{
    Rng r(3);
    auto v = select_pairs(100, 30, r);
    CHECK(v.size() == 30);
    CHECK(std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end());
    CHECK(select_pairs(5, 9, r).size() == 5);
}

TEST_CASE("transition sampling is uniform over five enabled transitions")
{
    Fan fan(5);
    const std::size_t n = 100000;
    auto hist = transition_sampling_histogram(fan.model, fan.grammar, {"Start"}, n, 1);
    // Start enables f1..f5 plus toA and toB; only count the five fan-out ones
    // in a model without the extra edges.
    CHECK(hist.size() == 7);

    json doc = Fan::make_model(5);
    json kept = json::array();
    for (const auto& t : doc["transitions"])
        if (t["from"] != "Start" || t["to"] == "End") kept.push_back(t);
    doc["transitions"] = kept;
    ModelLoadOptions relaxed{true};
    DialogueModel m5 = load_model(doc, relaxed);
    BoundGrammar g5 = Fan::make_grammar(m5, 5);
    auto h5 = transition_sampling_histogram(m5, g5, {"Start"}, n, 2);
    check_uniform(h5, 5, n);
    for (int i = 1; i <= 5; ++i) CHECK(h5.count("f" + std::to_string(i)));
}

TEST_CASE("transition sampling with one transition and with two contexts")
{
    Fan fan(1);
    auto one = transition_sampling_histogram(fan.model, fan.grammar, {"A"}, 1000, 3);
    CHECK(one == std::map<std::string, std::size_t>{{"a", 1000}});
    auto two = transition_sampling_histogram(fan.model, fan.grammar, {"A", "B"}, 100000, 4);
    check_uniform(two, 2, 100000);
    CHECK_THROWS_AS(transition_sampling_histogram(fan.model, fan.grammar, {"End"}, 10, 1), Error);
    CHECK_THROWS_AS(transition_sampling_histogram(fan.model, fan.grammar, {"Nowhere"}, 10, 1), Error);
}

TEST_CASE("transition sampling over the shipped search state")
{
    auto hist = transition_sampling_histogram(default_model(), restaurant_grammar(), {"SearchRequest"}, 100000, 5);
    check_uniform(hist, default_model().outgoing("SearchRequest").size(), 100000);
}

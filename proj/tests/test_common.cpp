#include <map>
#include <set>

#include "doctest.h"
#include "test_support.hpp"

using namespace dialsynth;

TEST_CASE("slot sets stay sorted and unique")
{
    SlotSet s;
    s.set("food", SlotValue::of("Indian"));
    s.set("area", SlotValue::of("south"));
    s.set("food", SlotValue::of("Thai"));
    REQUIRE(s.size() == 2);
    CHECK(s.entries()[0].first == "area");
    CHECK(s.find("food")->text == "Thai");
    CHECK(s.erase("area"));
    CHECK_FALSE(s.erase("area"));
    CHECK_FALSE(s.contains("area"));
}

TEST_CASE("add_disjoint leaves the set untouched on overlap")
{
    SlotSet a{{"food", SlotValue::of("Indian")}};
    SlotSet b{{"area", SlotValue::of("south")}, {"food", SlotValue::of("Thai")}};
    SlotSet before = a;
    CHECK_FALSE(a.add_disjoint(b));
    CHECK(a == before);
    SlotSet c{{"area", SlotValue::of("south")}};
    CHECK(a.add_disjoint(c));
    CHECK(a.size() == 2);
    a.merge(b);
    CHECK(a.find("food")->text == "Thai");
}

TEST_CASE("slot value display")
{
    CHECK(SlotValue::of("x").display() == "x");
    CHECK(SlotValue::requested().display() == "?");
    CHECK(SlotValue::dontcare().display() == "dontcare");
}

TEST_CASE("rng streams are reproducible and bounded")
{
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        uint64_t x = a.next();
        CHECK(x == b.next());
        differs = differs || x != c.next();
    }
    CHECK(differs);
    Rng r(1);
    for (uint64_t n : {1ULL, 2ULL, 3ULL, 10ULL, 1000003ULL})
        for (int i = 0; i < 200; ++i) CHECK(r.below(n) < n);
    unsigned __int128 big = (static_cast<unsigned __int128>(1) << 100) + 12345;
    for (int i = 0; i < 50; ++i) CHECK(r.below128(big) < big);
}

TEST_CASE("property: sample_indices returns k ascending distinct indices in range")
{
    Rng meta(99);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t n = static_cast<std::size_t>(meta.below(500));
        std::size_t k = n ? static_cast<std::size_t>(meta.below(n + 5)) : 3;
        Rng r(static_cast<uint64_t>(trial));
        auto v = sample_indices(n, k, r);
        REQUIRE(v.size() == std::min(n, k));
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(v[i] < n);
            if (i) CHECK(v[i - 1] < v[i]);
        }
    }
}

TEST_CASE("sample_indices draws subsets uniformly on both paths")
{
    // n=9,k=2 takes the sparse path, n=6,k=2 the dense one. Every 2-subset
    // should appear about trials / C(n,2) times.
    for (std::size_t n : {9u, 6u}) {
        const std::size_t subsets = n * (n - 1) / 2;
        const std::size_t trials = subsets * 1000;
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
        Rng r(n);
        for (std::size_t t = 0; t < trials; ++t) {
            auto v = sample_indices(n, 2, r);
            ++counts[{v[0], v[1]}];
        }
        CHECK(counts.size() == subsets);
        for (const auto& [k, c] : counts) {
            CHECK(c > 850);
            CHECK(c < 1150);
        }
    }
}

TEST_CASE("distinct_draws stops at exactly k distinct values")
{
    int calls = 0;
    auto v = distinct_draws<int>(3, [&] { return (calls++ / 2) % 5; });
    CHECK(v == std::vector<int>{0, 1, 2});
}

TEST_CASE("surface spacing")
{
    std::string s;
    append_surface(s, "How about");
    append_surface(s, "Curry Garden");
    append_surface(s, "?");
    append_surface(s, "It is");
    append_surface(s, ".");
    CHECK(s == "How about Curry Garden? It is.");
    std::string e;
    append_surface(e, "");
    append_surface(e, "x");
    CHECK(e == "x");
}

TEST_CASE("articles agree with the next word")
{
    CHECK(fix_articles("It is a Indian restaurant.") == "It is an Indian restaurant.");
    CHECK(fix_articles("It is an cheap restaurant.") == "It is a cheap restaurant.");
    CHECK(fix_articles("a expensive a restaurant") == "an expensive a restaurant");
    CHECK(fix_articles("I want a apple") == "I want an apple");
    CHECK(fix_articles("banana") == "banana");
}

TEST_CASE("whole-word matching and replacement")
{
    CHECK(contains_word("find me a restaurant", "restaurant"));
    CHECK_FALSE(contains_word("find me restaurants", "restaurant"));
    CHECK(contains_word("at 15:45.", "15:45"));
    CHECK_FALSE(contains_word("at 115:45", "15:45"));
    auto out = replace_words("a food place and a place", {{"place", "hotel"}, {"food place", "place to stay"}});
    CHECK(out == "a place to stay and a hotel");
    CHECK(to_lower("AbC") == "abc");
}

TEST_CASE("for_each_index covers every index and rethrows")
{
    std::vector<int> hits(1000, 0);
    for_each_index(hits.size(), ExecPolicy::parallel, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 1000);
    CHECK_THROWS_AS(for_each_index(50, ExecPolicy::parallel,
                                   [](std::size_t i) {
                                       if (i == 17) throw Error("boom");
                                   }),
                    Error);
}

TEST_CASE("parse errors carry a location")
{
    ParseError e({"g.tmpl", 3, 5}, "bad");
    CHECK(std::string(e.what()).find("g.tmpl:3:5") != std::string::npos);
    CHECK(e.where().line == 3);
}

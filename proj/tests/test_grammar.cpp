#include "doctest.h"
#include "test_support.hpp"

using namespace dialsynth;
using namespace testsupport;

namespace {

std::string parse_error(const std::string& text)
{
    try {
        parse_one(text);
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

Grammar sq_grammar() { return parse_templates({{"slot_question.tmpl", slurp(fixture("slot_question.tmpl"))}}); }

BoundGrammar sq_bound() { return bind_ontology(sq_grammar(), default_model(), default_ontology(), "restaurant"); }

const Production& only_phrase(const Grammar& g, const std::string& lhs)
{
    for (const auto& p : g.productions())
        if (p.lhs == lhs) return p;
    throw std::runtime_error("no production for " + lhs);
}

std::vector<const SemValue*> view(const std::vector<SemValue>& v)
{
    std::vector<const SemValue*> out;
    for (const auto& x : v) out.push_back(&x);
    return out;
}

}  // namespace

TEST_CASE("slot question source parses into one turn template and its phrases")
{
    Grammar g = sq_grammar();
    std::size_t turns = 0;
    for (const auto& p : g.productions()) turns += p.kind == ProductionKind::turn_template;
    CHECK(turns == 1);
    for (const char* nt : {"NP", "ADJ_SLOT", "PREP_SLOT", "NAME"}) CHECK(g.find_nonterminal(nt) != nullptr);
    CHECK(g.find_nonterminal("NP")->kind == ValueKind::slot_set);
    CHECK(g.find_nonterminal("NAME")->kind == ValueKind::slot_pair);
}

TEST_CASE("single literal rule")
{
    Grammar g = parse_one(R"(rule X := "hi";)");
    REQUIRE(g.productions().size() == 1);
    CHECK(g.productions()[0].action.empty());
    CHECK(g.productions()[0].rhs[0].text == "hi");
}

TEST_CASE("unproductive non-terminal is named")
{
    std::string e = parse_error("rule A := A;");
    CHECK(e.find("A is unproductive") != std::string::npos);
}

TEST_CASE("groups expand into numbered template alternatives")
{
    Grammar g = parse_one(R"(turn greet on t01 := ("Hi" | "Hello") "<sep>" ("a" | "b" | "c");)");
    std::vector<std::string> ids;
    for (const auto& p : g.productions()) ids.push_back(p.template_id);
    CHECK(ids == std::vector<std::string>{"greet.1", "greet.2", "greet.3", "greet.4", "greet.5", "greet.6"});
    CHECK(g.productions()[0].sep == 1);
}

TEST_CASE("static errors carry file, line and column")
{
    std::string e = parse_error("rule X := \"a\";\nrule Y := Z;");
    CHECK(e.find("test.tmpl:2:11") != std::string::npos);
    CHECK(e.find("unknown non-terminal Z") != std::string::npos);
}

TEST_CASE("grammar static checks")
{
    CHECK(parse_error(R"(turn t on t01 := "a";)").find("missing the <sep>") != std::string::npos);
    CHECK(parse_error(R"(turn t on t01 := "a" "<sep>" "b" "<sep>";)").find("more than one") != std::string::npos);
    CHECK(parse_error(R"(rule X := "a" "<sep>";)").find("only allowed in turn") != std::string::npos);
    CHECK(parse_error(R"(rule X := "a"; rule Y := X X;)").find("duplicate capture") != std::string::npos);
    CHECK(parse_error(R"(rule X := "a" => $y;)").find("unbound capture $y") != std::string::npos);
    CHECK(parse_error(R"(rule X := "a" action { require absent(food); };)").find("only read captures") !=
          std::string::npos);
    CHECK(parse_error(R"(rule X := "a" action { merge $x; };)").find("cannot have effects") != std::string::npos);
    CHECK(parse_error(R"(rule X := "a" => "s"; rule X := "b" => pair(food, "x");)").find("mixes scalar") !=
          std::string::npos);
    CHECK(parse_error(R"(turn t on t01 := "a" "<sep>" "b"; turn t on t02 := "a" "<sep>" "b";)").find("duplicate template") !=
          std::string::npos);
    CHECK(parse_error(R"(rule X := "a" => $x; rule Y := ;)").size() > 0);
    CHECK(parse_error("values N from slot food := \"x\" $name;").find("only $value") != std::string::npos);
    CHECK(parse_error("frobnicate X;").find("unknown statement") != std::string::npos);
}

TEST_CASE("phrase guards over captures filter derivations")
{
    Grammar g = parse_one(R"(
        values A from slot food;
        values B from slot area;
        rule P := A B action { require disjoint($a, $b); } => union($a, $b);
        rule Q := A@x A@y action { require not consistent($x, $y); } => $x;
    )");
    const auto& p = only_phrase(g, "P");
    CHECK(p.action.guards.size() == 1);
    const auto& q = only_phrase(g, "Q");
    REQUIRE(q.action.guards.size() == 1);
    CHECK(q.action.guards[0].negated);
    std::vector<SemValue> same{SemValue::make_pair("food", SlotValue::of("Thai")),
                               SemValue::make_pair("food", SlotValue::of("Thai"))};
    std::vector<SemValue> differ{SemValue::make_pair("food", SlotValue::of("Thai")),
                                 SemValue::make_pair("food", SlotValue::of("Indian"))};
    CHECK_FALSE(eval_guard(q.action.guards[0], {}, view(same)));
    CHECK(eval_guard(q.action.guards[0], {}, view(differ)));
}

TEST_CASE("binding instantiates value templates from the ontology")
{
    BoundGrammar bg = sq_bound();
    int food = bg.find_nonterminal("FOOD");
    REQUIRE(food >= 0);
    std::map<std::string, SemValue> by_surface;
    for (int pi : bg.nonterminals()[static_cast<std::size_t>(food)].productions) {
        const auto& bp = bg.productions()[static_cast<std::size_t>(pi)];
        REQUIRE(bp.literal_value);
        by_surface[bp.literal_surface] = *bp.literal_value;
    }
    CHECK(by_surface.size() == default_ontology().domain("restaurant").find_slot("food")->values.size());
    CHECK(by_surface.at("Italian") == SemValue::make_pair("food", SlotValue::of("Italian")));
    CHECK(by_surface.at("Indian") == SemValue::make_pair("food", SlotValue::of("Indian")));
    int area = bg.find_nonterminal("AREA");
    const auto& first = bg.productions()[static_cast<std::size_t>(bg.nonterminals()[static_cast<std::size_t>(area)].productions[0])];
    CHECK(first.literal_surface == "in the centre of town");
    int subj = bg.find_nonterminal("SUBJECT");
    CHECK(bg.nonterminals()[static_cast<std::size_t>(subj)].productions.size() == 3);
}

TEST_CASE("binding rejects slots without values or outside the domain")
{
    auto ont = load_ontology(nlohmann::json::parse(R"({"domains": {"shop": {"subjects": ["shop"],
        "slots": [{"name": "name", "kind": "open", "values": []}]}}})"));
    auto m = default_model();
    std::string msg;
    try {
        bind_ontology(parse_one("values N from slot name;"), m, ont, "shop");
    } catch (const Error& e) {
        msg = e.what();
    }
    CHECK(msg.find("\"name\"") != std::string::npos);
    CHECK_THROWS_WITH_AS(bind_ontology(parse_one("values N from slot colour;"), m, ont, "shop"),
                         doctest::Contains("colour"), Error);
    CHECK_THROWS_WITH_AS(bind_ontology(parse_one(R"(turn x on t99 := "a" "<sep>" "b";)"), m, ont, "shop"),
                         doctest::Contains("t99"), Error);
    CHECK_THROWS_WITH_AS(bind_ontology(parse_one(R"(turn x on t01 := "a" "<sep>" "b" action { abstract End; };)"),
                                       m, ont, "shop"),
                         doctest::Contains("goes to Greet"), Error);
}

TEST_CASE("two bindings of one grammar are independent")
{
    Grammar g = parse_one("subject SUBJECT; values NAME from slot name; values ADJ from slot price;");
    std::vector<std::string> warnings;
    BoundGrammar r = bind_ontology(g, default_model(), default_ontology(), "restaurant", &warnings);
    BoundGrammar h = bind_ontology(g, default_model(), default_ontology(), "hotel", &warnings);
    BoundGrammar r2 = bind_ontology(g, default_model(), default_ontology(), "restaurant", &warnings);
    CHECK(r.domain() == "restaurant");
    CHECK(h.domain() == "hotel");
    auto names = [](const BoundGrammar& bg) {
        return bg.nonterminals()[static_cast<std::size_t>(bg.find_nonterminal("NAME"))].productions.size();
    };
    CHECK(names(r) == default_ontology().domain("restaurant").find_slot("name")->values.size());
    CHECK(names(h) == default_ontology().domain("hotel").find_slot("name")->values.size());
    CHECK(names(r) != names(h));
    h = r2;
    CHECK(names(r) == names(r2));
    CHECK(h.domain() == "restaurant");
}

TEST_CASE("shipped templates cover every transition in both template domains")
{
    for (const char* d : {"restaurant", "hotel"}) {
        std::vector<std::string> warnings;
        auto bg = bind_ontology(parse_templates(load_template_dir(data("templates"), d)), default_model(),
                                default_ontology(), d, &warnings);
        INFO(d);
        CHECK(warnings.empty());
        for (std::size_t t = 0; t < default_model().transitions().size(); ++t) CHECK_FALSE(bg.templates_for(t).empty());
    }
}

TEST_CASE("slot question action semantics")
{
    BoundGrammar bg = sq_bound();
    const TurnTemplate* t = bg.find_template("slot_question");
    REQUIRE(t);
    ConcreteState s{"SearchRequest", "restaurant",
                    {{"food", SlotValue::of("Indian")},
                     {"area", SlotValue::of("south")},
                     {"name", SlotValue::of("Curry Garden")}}};
    std::map<std::string, SemValue> caps{
        {"name", SemValue::make_pair("name", SlotValue::of("Curry Garden"))},
        {"np", SemValue::make_set({{"food", SlotValue::of("Indian")}, {"area", SlotValue::of("south")}})},
        {"adj_slot", SemValue::make_pair("price", SlotValue::of("expensive"))}};
    auto out = bg.replay(*t, s, caps);
    REQUIRE(out);
    CHECK(out->abstract == "SlotQuestion");
    ConcreteState expect = s;
    expect.abstract = "SlotQuestion";
    expect.slots.set("price", SlotValue::requested());
    CHECK(*out == expect);

    s.slots.set("price", SlotValue::of("cheap"));
    CHECK_FALSE(bg.replay(*t, s, caps));

    // A proposal that contradicts the state is rejected as well.
    s.slots.erase("price");
    caps["np"] = SemValue::make_set({{"food", SlotValue::of("Thai")}});
    CHECK_FALSE(bg.replay(*t, s, caps));
    caps.erase("np");
    CHECK_FALSE(bg.replay(*t, s, caps));
}

TEST_CASE("empty action is the identity")
{
    SemanticAction a;
    ConcreteState s{"SearchRequest", "restaurant", {{"food", SlotValue::of("Indian")}}};
    auto out = eval_action(a, s, {});
    REQUIRE(out);
    CHECK(*out == s);
}

TEST_CASE("effects and guards")
{
    Grammar g = parse_one(R"(
        values A from slot food;
        values N from slot area := "the" $value "area";
        names Q from slot price := "price";
        turn t1 on t01 := A "<sep>" N
            action { require absent($a); require not present(area); require eq($a.name, "food");
                     merge $a; set $n.name dontcare; set price "?"; };
        turn t2 on t02 := Q "<sep>" A
            action { require requested($q); clear requested; set $a.name $a.value; clear $a; set name "Cotto"; };
    )");
    auto bg = bind_ontology(g, default_model(), default_ontology(), "restaurant");
    ConcreteState s{"Start", "restaurant", {}};
    auto r1 = bg.replay(*bg.find_template("t1"), s,
                        {{"a", SemValue::make_pair("food", SlotValue::of("Thai"))},
                         {"n", SemValue::make_pair("area", SlotValue::of("north"))}});
    REQUIRE(r1);
    CHECK(r1->abstract == "Greet");
    CHECK(r1->slots == SlotSet{{"area", SlotValue::dontcare()},
                               {"food", SlotValue::of("Thai")},
                               {"price", SlotValue::requested()}});
    s.slots.set("area", SlotValue::of("north"));
    CHECK_FALSE(bg.replay(*bg.find_template("t1"), s,
                          {{"a", SemValue::make_pair("food", SlotValue::of("Thai"))},
                           {"n", SemValue::make_pair("area", SlotValue::of("north"))}}));

    auto r2 = bg.replay(*bg.find_template("t2"), *r1,
                        {{"q", SemValue::make_pair("price", SlotValue::requested())},
                         {"a", SemValue::make_pair("food", SlotValue::of("Thai"))}});
    REQUIRE(r2);
    CHECK(r2->slots == SlotSet{{"area", SlotValue::dontcare()}, {"name", SlotValue::of("Cotto")}});
    CHECK_FALSE(bg.replay(*bg.find_template("t2"), *r2,
                          {{"q", SemValue::make_pair("price", SlotValue::requested())},
                           {"a", SemValue::make_pair("food", SlotValue::of("Thai"))}}));
}

TEST_CASE("unions that bind a slot twice yield no value")
{
    Grammar g = parse_one(R"(values A from slot food; rule P := A@x A@y => union($x, $y);)");
    const auto& p = only_phrase(g, "P");
    std::vector<SemValue> v{SemValue::make_pair("food", SlotValue::of("Thai")),
                            SemValue::make_pair("food", SlotValue::of("Thai"))};
    CHECK_FALSE(eval_expr(*p.action.result, view(v)));
}

TEST_CASE("template directory loading order")
{
    auto src = load_template_dir(data("templates"), "restaurant");
    REQUIRE(src.size() == 2);
    CHECK(src[0].name.find("dialogue.tmpl") != std::string::npos);
    CHECK(src[1].name.find("restaurant.tmpl") != std::string::npos);
    CHECK(load_template_dir(data("templates"), "taxi").size() == 1);
}

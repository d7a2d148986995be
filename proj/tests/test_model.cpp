#include <set>

#include "doctest.h"
#include "test_support.hpp"

using namespace dialsynth;
using testsupport::default_model;
using nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
      "states": [{"name": "Start", "start": true}, {"name": "End", "end": true}],
      "acts": [{"name": "Hi", "speaker": "agent"}, {"name": "Bye", "speaker": "user"}],
      "transitions": [{"id": "t1", "from": "Start", "agent_act": "Hi", "user_act": "Bye", "to": "End"}]
    })");
}

std::string error_of(const json& doc, ModelLoadOptions opts = {})
{
    try {
        load_model(doc, opts);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("shipped model counts")
{
    const auto& m = default_model();
    CHECK(m.states().size() == 13);
    CHECK(m.count_acts(Speaker::agent) == 15);
    CHECK(m.count_acts(Speaker::user) == 17);
    CHECK(m.transitions().size() == 34);
    CHECK(m.start().name == "Start");
    CHECK(m.end().name == "End");
}

TEST_CASE("every shipped transition lies on a Start-End path of at most 6 turns")
{
    // Breadth-first distances from Start and to End over the transition graph.
    const auto& m = default_model();
    std::map<std::string, int> from_start{{m.start().name, 0}}, to_end{{m.end().name, 0}};
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& t : m.transitions()) {
            if (from_start.count(t.from_state) &&
                (!from_start.count(t.to_state) || from_start[t.to_state] > from_start[t.from_state] + 1)) {
                from_start[t.to_state] = from_start[t.from_state] + 1;
                changed = true;
            }
            if (to_end.count(t.to_state) &&
                (!to_end.count(t.from_state) || to_end[t.from_state] > to_end[t.to_state] + 1)) {
                to_end[t.from_state] = to_end[t.to_state] + 1;
                changed = true;
            }
        }
    }
    for (const auto& t : m.transitions()) {
        INFO(t.id);
        REQUIRE(from_start.count(t.from_state));
        REQUIRE(to_end.count(t.to_state));
        CHECK(from_start[t.from_state] + 1 + to_end[t.to_state] <= 6);
    }
}

TEST_CASE("minimal two-state model")
{
    DialogueModel m = load_model(minimal());
    CHECK(m.states().size() == 2);
    CHECK(enabled_transitions(m, "Start").size() == 1);
    CHECK(enabled_transitions(m, "End").empty());
}

TEST_CASE("enabled transitions of the shipped model")
{
    auto ts = enabled_transitions(default_model(), "SearchRequest");
    bool found = false;
    for (const auto& t : ts) found = found || (t.agent_act == "ProposeEntity" && t.user_act == "AskSlotQuestion");
    CHECK(found);
    CHECK(enabled_transitions(default_model(), "End").empty());
    CHECK_THROWS_AS(enabled_transitions(default_model(), "Nowhere"), Error);
}

TEST_CASE("dangling state reference names the state")
{
    json doc = minimal();
    doc["transitions"][0]["to"] = "Gret";
    CHECK(error_of(doc).find("Gret") != std::string::npos);
}

TEST_CASE("structural model errors")
{
    json doc = minimal();
    doc["states"][1]["start"] = true;
    CHECK(error_of(doc).find("start state") != std::string::npos);

    doc = minimal();
    doc["transitions"].push_back(doc["transitions"][0]);
    CHECK(error_of(doc).find("duplicate transition") != std::string::npos);

    doc = minimal();
    doc["transitions"][0]["agent_act"] = "Bye";
    CHECK(error_of(doc).find("agent act") != std::string::npos);

    doc = minimal();
    doc.erase("acts");
    CHECK_THROWS_AS(load_model(doc), FormatError);
    CHECK_THROWS_AS(load_model(json::array()), FormatError);
}

TEST_CASE("unreachable states are errors unless demoted")
{
    json doc = minimal();
    doc["states"].push_back({{"name", "Island"}});
    CHECK(error_of(doc).find("Island") != std::string::npos);
    std::vector<std::string> warnings;
    DialogueModel m = load_model(doc, {true}, &warnings);
    CHECK(m.states().size() == 3);
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings.front().find("Island") != std::string::npos);
}

TEST_CASE("model hash tracks content and round-trips through to_json")
{
    DialogueModel a = load_model(minimal());
    json changed = minimal();
    changed["transitions"][0]["id"] = "t2";
    CHECK(a.hash() != load_model(changed).hash());
    DialogueModel again = load_model(json::parse(default_model().to_json().dump()));
    CHECK(again.hash() == default_model().hash());
    CHECK(again.transitions().size() == 34);
}

TEST_CASE("slot qualification helpers")
{
    CHECK(qualify_slot("restaurant", "food") == "restaurant-food");
    ConcreteState single{"SearchRequest", "restaurant", {{"food", SlotValue::of("Thai")}}};
    CHECK(project_slots(single, "restaurant") == single.slots);
    CHECK(project_slots(single, "hotel").empty());
    SlotSet q = qualified_slots(single);
    CHECK(q.contains("restaurant-food"));
    ConcreteState multi{"SearchRequest", "taxi", q};
    multi.slots.set("taxi-leave_at", SlotValue::of("10:00"));
    CHECK(project_slots(multi, "taxi").contains("leave_at"));
    CHECK(project_slots(multi, "restaurant").contains("food"));
    CHECK(qualified_slots(multi) == multi.slots);
}

TEST_CASE("property: enabled transitions partition the transition set")
{
    const auto& m = default_model();
    std::multiset<std::string> seen;
    for (const auto& s : m.states())
        for (const auto& t : enabled_transitions(m, s.name)) {
            CHECK(t.from_state == s.name);
            seen.insert(t.id);
        }
    CHECK(seen.size() == m.transitions().size());
    for (const auto& t : m.transitions()) CHECK(seen.count(t.id) == 1);
}

TEST_CASE("reference restaurant dialogue is well formed")
{
    Dialogue d = testsupport::read_one(testsupport::fixture("reference_booking.jsonl"));
    auto r = validate_dialogue(default_model(), &testsupport::restaurant_grammar(), d);
    for (const auto& v : r.violations) MESSAGE(v.turn << ": " << v.condition << ": " << v.message);
    CHECK(r.ok());
    CHECK(r.replayed_turns == 6);
    CHECK_FALSE(r.replay_skipped());

    auto structural = validate_dialogue(default_model(), nullptr, d);
    CHECK(structural.ok());
    CHECK(structural.skipped_turns == 6);
}

TEST_CASE("a first turn that does not start at Start violates condition 3")
{
    Dialogue d = testsupport::read_one(testsupport::fixture("reference_booking.jsonl"));
    d.initial_state = ConcreteState{"SlotQuestion", "restaurant", {}};
    auto r = validate_dialogue(default_model(), &testsupport::restaurant_grammar(), d);
    bool cond3 = false;
    for (const auto& v : r.violations) cond3 = cond3 || (v.condition == 3 && v.turn == 0);
    CHECK(cond3);
}

TEST_CASE("a mutated capture violates condition 2 at that turn only")
{
    Dialogue d = testsupport::read_one(testsupport::fixture("reference_booking.jsonl"));
    REQUIRE(d.turns[1].provenance);
    d.turns[1].provenance->captures["answer"] = SemValue::make_pair("food", SlotValue::of("indian"));
    auto r = validate_dialogue(default_model(), &testsupport::restaurant_grammar(), d);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].condition == 2);
    CHECK(r.violations[0].turn == 1);
    CHECK(r.violations[0].message.find("indian") != std::string::npos);
}

TEST_CASE("shipped bad fixture fails replay")
{
    Dialogue d = testsupport::read_one(testsupport::fixture("bad_replay.jsonl"));
    auto r = validate_dialogue(default_model(), &testsupport::restaurant_grammar(), d);
    REQUIRE_FALSE(r.ok());
    for (const auto& v : r.violations) CHECK(v.condition == 2);
}

TEST_CASE("structural violations")
{
    Dialogue d = testsupport::read_one(testsupport::fixture("city_center.jsonl"));
    CHECK(validate_dialogue(default_model(), nullptr, d).ok());

    Dialogue jump = d;
    jump.turns[1].end_state.abstract = "CompleteTransaction";
    auto r = validate_dialogue(default_model(), nullptr, jump);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations[0].condition == 1);
    CHECK(r.violations[0].turn == 1);

    Dialogue short_one = d;
    short_one.turns.pop_back();
    r = validate_dialogue(default_model(), nullptr, short_one);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].condition == 3);

    Dialogue sep = d;
    sep.turns[0].user_utterance += " <sep>";
    CHECK(validate_dialogue(default_model(), nullptr, sep).violations.at(0).condition == 0);

    CHECK_FALSE(validate_dialogue(default_model(), nullptr, Dialogue{}).ok());
}

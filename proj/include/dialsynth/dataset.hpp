#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dialsynth/model.hpp"
#include "dialsynth/ontology.hpp"
#include "dialsynth/parallel.hpp"

namespace dialsynth {

// ---------------------------------------------------------------------------
// Native line format

nlohmann::ordered_json slots_to_json(const SlotSet& s);
SlotSet slots_from_json(const nlohmann::json& j);
nlohmann::ordered_json semvalue_to_json(const SemValue& v);
SemValue semvalue_from_json(const nlohmann::json& j);
nlohmann::ordered_json dialogue_to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);

// One JSON object per line.
void emit_native(const DialogueCorpus& c, std::ostream& out);
// Throws FormatError naming `source` and the line on malformed input. Blank
// lines are ignored.
std::vector<Dialogue> parse_native(std::istream& in, const std::string& source = "<input>");

DialogueCorpus read_native_file(const std::string& path);
void write_native_file(const DialogueCorpus& c, const std::string& path);

// ---------------------------------------------------------------------------
// MultiWOZ-style document

// Cumulative belief state per domain: domain -> slot -> value, with "?" for
// requested slots and "dontcare" for dontcare.
using BeliefState = std::map<std::string, std::map<std::string, std::string>>;

BeliefState belief_state(const ConcreteState& s);

void emit_multiwoz(const DialogueCorpus& c, std::ostream& out);

struct MultiwozDialogue {
    std::string id;
    std::vector<std::string> user;
    std::vector<std::string> system;
    std::vector<BeliefState> states;  // after each user utterance
};

std::vector<MultiwozDialogue> parse_multiwoz(std::istream& in);

// ---------------------------------------------------------------------------
// Sampling and mixing

DialogueCorpus sample_corpus(const DialogueCorpus& c, double fraction, uint64_t seed);

struct MixPart {
    const DialogueCorpus* corpus = nullptr;
    double fraction = 1.0;
    uint64_t seed = 0;
    std::string label;
};

// Concatenates a sample of each part. Ids already used by an earlier part
// are prefixed with "p<part index>-".
DialogueCorpus mix(const std::vector<MixPart>& parts);

// ---------------------------------------------------------------------------
// Statistics

struct StatsReport {
    std::size_t dialogue_count = 0;
    std::size_t turn_count = 0;
    std::map<std::size_t, std::size_t> turn_histogram;
    std::map<std::size_t, std::size_t> slots_per_turn;
    std::map<std::string, std::size_t> transition_counts;  // every model transition, zeros included
    std::size_t distinct_user_utterances = 0;
    // slot -> value -> number of turns whose state carries it
    std::map<std::string, std::map<std::string, std::size_t>> slot_values;

    std::size_t transitions_covered() const;
    nlohmann::ordered_json to_json() const;
    std::string summary() const;
};

StatsReport compute_stats(const DialogueCorpus& c, const DialogueModel& model, ExecPolicy policy = ExecPolicy::parallel);

// (slot, value) pairs of categorical slots in `domain` that the corpus never uses.
std::vector<std::pair<std::string, std::string>> uncovered_categorical_values(const StatsReport& r,
                                                                              const Ontology& ont,
                                                                              std::string_view domain);

}  // namespace dialsynth

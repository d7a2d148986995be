#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dialsynth/model.hpp"
#include "dialsynth/ontology.hpp"
#include "dialsynth/parallel.hpp"

namespace dialsynth {

enum class ValuePolicy { resample_from_target, identity_if_shared };

struct DomainMapping {
    std::string source;
    std::string target;
    std::map<std::string, std::string> slot_map;
    ValuePolicy value_policy = ValuePolicy::resample_from_target;
};

DomainMapping load_mapping(const nlohmann::json& doc);
DomainMapping load_mapping_file(const std::string& path);
// Throws Error for unknown domains or slots and for a non-injective slot map.
void check_mapping(const DomainMapping& m, const Ontology& ont);

struct AdaptResult {
    std::optional<Dialogue> dialogue;
    std::string skip_reason;

    bool adapted() const { return dialogue.has_value(); }
};

AdaptResult adapt_dialogue(const Dialogue& d, const DomainMapping& m, const Ontology& ont, uint64_t seed);

// Adapts each dialogue with its own seed stream; results follow input order.
std::vector<AdaptResult> adapt_corpus(const std::vector<Dialogue>& ds, const DomainMapping& m, const Ontology& ont,
                                      uint64_t seed, ExecPolicy policy = ExecPolicy::parallel);

// Splices d2 after d1's first CloseConversation turn, dropping d2's first turn.
Dialogue concat_multi_domain(const Dialogue& d1, const Dialogue& d2, const DialogueModel& model);

// Best-effort switch point for dialogues without recorded states: index of
// the first turn whose agent utterance contains one of the phrases.
std::optional<std::size_t> find_close_turn_by_text(const Dialogue& d, const std::vector<std::string>& phrases);

}  // namespace dialsynth

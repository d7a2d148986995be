#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dialsynth/common.hpp"

namespace dialsynth {

enum class SlotKind { categorical, open, time, number };

std::string_view to_string(SlotKind k);

struct SlotDef {
    std::string name;
    SlotKind kind = SlotKind::categorical;
    // Complete value list for categorical slots, a sample pool otherwise.
    std::vector<std::string> values;
    bool bookable = false;

    friend bool operator==(const SlotDef&, const SlotDef&) = default;
};

struct DomainDef {
    std::string name;
    std::vector<std::string> subjects;
    std::vector<SlotDef> slots;

    const SlotDef* find_slot(std::string_view name) const;

    friend bool operator==(const DomainDef&, const DomainDef&) = default;
};

struct OntologyOptions {
    std::size_t pool_size = 50;
};

class Ontology {
public:
    const std::map<std::string, DomainDef, std::less<>>& domains() const { return domains_; }
    const DomainDef* find_domain(std::string_view name) const;
    const DomainDef& domain(std::string_view name) const;  // throws Error when unknown

    nlohmann::ordered_json to_json() const;

    friend bool operator==(const Ontology&, const Ontology&) = default;

private:
    friend Ontology load_ontology(const nlohmann::json&, const OntologyOptions&, std::vector<std::string>*);

    std::map<std::string, DomainDef, std::less<>> domains_;
};

Ontology load_ontology(const nlohmann::json& doc, const OntologyOptions& opts = {},
                       std::vector<std::string>* warnings = nullptr);
Ontology load_ontology_file(const std::string& path, const OntologyOptions& opts = {},
                            std::vector<std::string>* warnings = nullptr);

// Slot names present in both domains, sorted.
std::vector<std::string> shared_slots(const Ontology& ont, std::string_view a, std::string_view b);

bool is_valid_time(std::string_view v);

}  // namespace dialsynth

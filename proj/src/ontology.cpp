#include "dialsynth/ontology.hpp"

#include <fstream>
#include <set>

namespace dialsynth {

using nlohmann::json;

std::string_view to_string(SlotKind k)
{
    switch (k) {
    case SlotKind::categorical: return "categorical";
    case SlotKind::open: return "open";
    case SlotKind::time: return "time";
    case SlotKind::number: return "number";
    }
    return "?";
}

static SlotKind parse_kind(const std::string& s, const std::string& ctx)
{
    if (s == "categorical") return SlotKind::categorical;
    if (s == "open") return SlotKind::open;
    if (s == "time") return SlotKind::time;
    if (s == "number") return SlotKind::number;
    throw Error("ontology: " + ctx + " has unknown kind \"" + s + "\"");
}

bool is_valid_time(std::string_view v)
{
    if (v.size() != 5 || v[2] != ':') return false;
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    if (!digit(v[0]) || !digit(v[1]) || !digit(v[3]) || !digit(v[4])) return false;
    int hh = (v[0] - '0') * 10 + (v[1] - '0');
    int mm = (v[3] - '0') * 10 + (v[4] - '0');
    return hh < 24 && mm < 60;
}

static bool valid_name(std::string_view s)
{
    // '-' is reserved for domain-qualified slot names.
    return !s.empty() && s.find('-') == std::string_view::npos && s.find('+') == std::string_view::npos;
}

const SlotDef* DomainDef::find_slot(std::string_view n) const
{
    for (const auto& s : slots)
        if (s.name == n) return &s;
    return nullptr;
}

const DomainDef* Ontology::find_domain(std::string_view name) const
{
    auto it = domains_.find(name);
    return it == domains_.end() ? nullptr : &it->second;
}

const DomainDef& Ontology::domain(std::string_view name) const
{
    if (const auto* d = find_domain(name)) return *d;
    throw Error("ontology: unknown domain \"" + std::string(name) + "\"");
}

nlohmann::ordered_json Ontology::to_json() const
{
    nlohmann::ordered_json doms = nlohmann::ordered_json::object();
    for (const auto& [name, d] : domains_) {
        nlohmann::ordered_json slots = nlohmann::ordered_json::array();
        for (const auto& s : d.slots)
            slots.push_back({{"name", s.name},
                             {"kind", std::string(to_string(s.kind))},
                             {"values", s.values},
                             {"bookable", s.bookable}});
        doms[name] = {{"subjects", d.subjects}, {"slots", slots}};
    }
    return {{"domains", doms}};
}

Ontology load_ontology(const json& doc, const OntologyOptions& opts, std::vector<std::string>* warnings)
{
    if (!doc.is_object() || !doc.contains("domains") || !doc["domains"].is_object())
        throw FormatError("ontology: expected an object with a \"domains\" object");
    Ontology ont;
    for (const auto& [dname, dj] : doc["domains"].items()) {
        if (!valid_name(dname)) throw Error("ontology: invalid domain name \"" + dname + "\"");
        if (!dj.is_object()) throw FormatError("ontology: domain \"" + dname + "\" must be an object");
        DomainDef d;
        d.name = dname;
        if (dj.contains("subjects")) {
            for (const auto& s : dj["subjects"]) {
                if (!s.is_string() || s.get<std::string>().empty())
                    throw FormatError("ontology: domain \"" + dname + "\" has a non-string subject");
                d.subjects.push_back(s.get<std::string>());
            }
        }
        if (d.subjects.empty()) throw Error("ontology: domain \"" + dname + "\" has no subject phrases");

        std::set<std::string> seen;
        for (const auto& sj : dj.value("slots", json::array())) {
            if (!sj.is_object() || !sj.contains("name") || !sj["name"].is_string())
                throw FormatError("ontology: domain \"" + dname + "\" has a slot without a name");
            SlotDef s;
            s.name = sj["name"].get<std::string>();
            const std::string ctx = "slot \"" + dname + "." + s.name + "\"";
            if (!valid_name(s.name)) throw Error("ontology: invalid slot name in " + ctx);
            if (!seen.insert(s.name).second) throw Error("ontology: duplicate " + ctx);
            s.kind = parse_kind(sj.value("kind", std::string("categorical")), ctx);
            s.bookable = sj.value("bookable", false);
            std::set<std::string> vals;
            for (const auto& v : sj.value("values", json::array())) {
                if (!v.is_string() || v.get<std::string>().empty())
                    throw FormatError("ontology: " + ctx + " has a non-string or empty value");
                std::string text = v.get<std::string>();
                if (!vals.insert(text).second) throw Error("ontology: " + ctx + " repeats value \"" + text + "\"");
                if (s.kind == SlotKind::time && !is_valid_time(text))
                    throw Error("ontology: " + ctx + " has malformed time value \"" + text + "\"");
                s.values.push_back(std::move(text));
            }
            if (s.kind == SlotKind::categorical && s.values.empty())
                throw Error("ontology: categorical " + ctx + " has an empty value list");
            if (s.kind != SlotKind::categorical && s.values.size() > opts.pool_size)
                s.values.resize(opts.pool_size);
            d.slots.push_back(std::move(s));
        }
        if (d.slots.empty() && warnings) warnings->push_back("ontology: domain \"" + dname + "\" has no slots");
        ont.domains_.emplace(dname, std::move(d));
    }
    return ont;
}

Ontology load_ontology_file(const std::string& path, const OntologyOptions& opts, std::vector<std::string>* warnings)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open ontology file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return load_ontology(doc, opts, warnings);
}

std::vector<std::string> shared_slots(const Ontology& ont, std::string_view a, std::string_view b)
{
    const auto& da = ont.domain(a);
    const auto& db = ont.domain(b);
    std::vector<std::string> out;
    for (const auto& s : da.slots)
        if (db.find_slot(s.name)) out.push_back(s.name);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dialsynth

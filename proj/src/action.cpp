#include "dialsynth/grammar.hpp"

#include <stdexcept>

namespace dialsynth {

namespace {

const SemValue& cap(CaptureView captures, int i)
{
    if (i < 0 || static_cast<std::size_t>(i) >= captures.size() || captures[static_cast<std::size_t>(i)] == nullptr)
        throw std::logic_error("semantic action reads an unbound capture");
    return *captures[static_cast<std::size_t>(i)];
}

const SlotSet::Entry& pair_entry(const SemValue& v)
{
    if (!v.is_slots() || v.slots.size() != 1)
        throw std::logic_error("semantic action expected a single slot-value pair");
    return v.slots.entries().front();
}

// Names (and values, where known) covered by an operand without unions.
struct Atom {
    const SlotSet* set = nullptr;
    std::string_view single;
};

Atom atom_of(const Operand& o, const SlotSet& state, CaptureView captures)
{
    switch (o.kind) {
    case Operand::Kind::state_slots: return {&state, {}};
    case Operand::Kind::capture: return {&cap(captures, o.capture).slots, {}};
    case Operand::Kind::slot: return {nullptr, o.slot};
    case Operand::Kind::union_of: break;
    }
    throw std::logic_error("union operand reached atom evaluation");
}

bool atoms_disjoint(const Atom& a, const Atom& b)
{
    if (!a.set && !b.set) return a.single != b.single;
    if (!a.set) return !b.set->contains(a.single);
    if (!b.set) return !a.set->contains(b.single);
    auto i = a.set->begin(), ie = a.set->end();
    auto j = b.set->begin(), je = b.set->end();
    while (i != ie && j != je) {
        if (i->first < j->first)
            ++i;
        else if (j->first < i->first)
            ++j;
        else
            return false;
    }
    return true;
}

bool atoms_consistent(const Atom& a, const Atom& b)
{
    if (!a.set || !b.set) return true;
    auto i = a.set->begin(), ie = a.set->end();
    auto j = b.set->begin(), je = b.set->end();
    while (i != ie && j != je) {
        if (i->first < j->first)
            ++i;
        else if (j->first < i->first)
            ++j;
        else {
            if (i->second != j->second) return false;
            ++i;
            ++j;
        }
    }
    return true;
}

template <typename F>
bool all_atoms(const Operand& o, const SlotSet& state, CaptureView captures, F&& f)
{
    if (o.kind == Operand::Kind::union_of) {
        for (const auto& p : o.parts)
            if (!all_atoms(p, state, captures, f)) return false;
        return true;
    }
    return f(atom_of(o, state, captures));
}

std::string term_text(const Term& t, const SlotSet& state, CaptureView captures)
{
    switch (t.kind) {
    case Term::Kind::literal: return t.text;
    case Term::Kind::capture: {
        const auto& v = cap(captures, t.capture);
        if (v.kind == ValueKind::scalar) return v.scalar;
        return pair_entry(v).second.display();
    }
    case Term::Kind::capture_name: return pair_entry(cap(captures, t.capture)).first;
    case Term::Kind::capture_value: return pair_entry(cap(captures, t.capture)).second.display();
    case Term::Kind::slot: {
        const auto* v = state.find(t.text);
        return v ? v->display() : std::string();
    }
    }
    return {};
}

void collect(const Operand& o, std::vector<int>& out)
{
    if (o.kind == Operand::Kind::capture) out.push_back(o.capture);
    for (const auto& p : o.parts) collect(p, out);
}

void collect(const Term& t, std::vector<int>& out)
{
    if (t.capture >= 0) out.push_back(t.capture);
}

}  // namespace

namespace {

bool eval_positive(const Guard& g, const SlotSet& state, CaptureView captures)
{
    switch (g.kind) {
    case Guard::Kind::absent:
        return all_atoms(g.a, state, captures, [&](const Atom& a) { return atoms_disjoint(a, {&state, {}}); });
    case Guard::Kind::present:
        return all_atoms(g.a, state, captures, [&](const Atom& a) {
            if (!a.set) return state.contains(a.single);
            for (const auto& e : *a.set)
                if (!state.contains(e.first)) return false;
            return true;
        });
    case Guard::Kind::requested:
        return all_atoms(g.a, state, captures, [&](const Atom& a) {
            auto is_req = [&](std::string_view n) {
                const SlotValue* v = state.find(n);
                return v && v->kind == SlotValueKind::requested;
            };
            if (!a.set) return is_req(a.single);
            for (const auto& e : *a.set)
                if (!is_req(e.first)) return false;
            return true;
        });
    case Guard::Kind::disjoint:
        return all_atoms(g.a, state, captures, [&](const Atom& x) {
            return all_atoms(g.b, state, captures, [&](const Atom& y) { return atoms_disjoint(x, y); });
        });
    case Guard::Kind::consistent:
        return all_atoms(g.a, state, captures, [&](const Atom& x) {
            return all_atoms(g.b, state, captures, [&](const Atom& y) { return atoms_consistent(x, y); });
        });
    case Guard::Kind::eq: return term_text(g.x, state, captures) == term_text(g.y, state, captures);
    }
    return false;
}

}  // namespace

bool eval_guard(const Guard& g, const SlotSet& state, CaptureView captures)
{
    return eval_positive(g, state, captures) != g.negated;
}

std::optional<ConcreteState> eval_action(const SemanticAction& a, const ConcreteState& state, CaptureView captures)
{
    for (const auto& g : a.guards)
        if (!eval_guard(g, state.slots, captures)) return std::nullopt;

    ConcreteState out = state;
    for (const auto& e : a.effects) {
        switch (e.kind) {
        case Effect::Kind::set_abstract: out.abstract = e.name; break;
        case Effect::Kind::set_slot: {
            std::string name = e.capture >= 0 ? pair_entry(cap(captures, e.capture)).first : e.name;
            SlotValue v;
            switch (e.value) {
            case Effect::Value::requested: v = SlotValue::requested(); break;
            case Effect::Value::dontcare: v = SlotValue::dontcare(); break;
            case Effect::Value::literal: v = SlotValue::of(e.value_text); break;
            case Effect::Value::capture_value: v = pair_entry(cap(captures, e.value_capture)).second; break;
            case Effect::Value::capture: {
                const auto& c = cap(captures, e.value_capture);
                v = c.kind == ValueKind::scalar ? SlotValue::of(c.scalar) : pair_entry(c).second;
                break;
            }
            }
            out.slots.set(std::move(name), std::move(v));
            break;
        }
        case Effect::Kind::merge: out.slots.merge(cap(captures, e.capture).slots); break;
        case Effect::Kind::clear_slot: out.slots.erase(e.name); break;
        case Effect::Kind::clear_capture:
            for (const auto& entry : cap(captures, e.capture).slots) out.slots.erase(entry.first);
            break;
        case Effect::Kind::clear_requested: {
            SlotSet kept;
            for (const auto& entry : out.slots)
                if (entry.second.kind != SlotValueKind::requested) kept.set(entry.first, entry.second);
            out.slots = std::move(kept);
            break;
        }
        }
    }
    return out;
}

std::optional<SemValue> eval_expr(const Expr& e, CaptureView captures, std::string_view hook_value)
{
    switch (e.kind) {
    case Expr::Kind::capture: return cap(captures, e.capture);
    case Expr::Kind::empty: return SemValue::make_set({});
    case Expr::Kind::literal: return SemValue::make_scalar(e.text);
    case Expr::Kind::union_of: {
        SlotSet acc;
        for (const auto& p : e.parts) {
            auto v = eval_expr(p, captures, hook_value);
            if (!v) return std::nullopt;
            if (!acc.add_disjoint(v->slots)) return std::nullopt;
        }
        return SemValue::make_set(std::move(acc));
    }
    case Expr::Kind::pair: {
        SlotValue v;
        switch (e.pair_value) {
        case Expr::PairValue::literal: v = SlotValue::of(e.text); break;
        case Expr::PairValue::dontcare: v = SlotValue::dontcare(); break;
        case Expr::PairValue::requested: v = SlotValue::requested(); break;
        case Expr::PairValue::hook_value: v = SlotValue::of(std::string(hook_value)); break;
        case Expr::PairValue::capture: {
            const auto& c = cap(captures, e.capture);
            v = c.kind == ValueKind::scalar ? SlotValue::of(c.scalar) : pair_entry(c).second;
            break;
        }
        }
        return SemValue::make_pair(e.slot, std::move(v));
    }
    }
    return std::nullopt;
}

std::vector<int> guard_captures(const Guard& g)
{
    std::vector<int> out;
    collect(g.a, out);
    collect(g.b, out);
    collect(g.x, out);
    collect(g.y, out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace dialsynth

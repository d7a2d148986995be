#include <functional>

#include "dialsynth/grammar.hpp"
#include "dialsynth/ontology.hpp"

namespace dialsynth {

int BoundGrammar::find_nonterminal(std::string_view name) const
{
    auto it = nt_index_.find(name);
    return it == nt_index_.end() ? -1 : it->second;
}

const TurnTemplate* BoundGrammar::find_template(std::string_view id) const
{
    auto it = template_index_.find(id);
    return it == template_index_.end() ? nullptr : &templates_[it->second];
}

std::optional<ConcreteState> BoundGrammar::replay(const TurnTemplate& t, const ConcreteState& state,
                                                  const std::map<std::string, SemValue>& captures) const
{
    std::vector<const SemValue*> view;
    view.reserve(t.capture_names.size());
    for (const auto& n : t.capture_names) {
        auto it = captures.find(n);
        if (it == captures.end()) return std::nullopt;
        view.push_back(&it->second);
    }
    return eval_action(t.action, state, view);
}

namespace {

void check_slot(const DomainDef& d, const std::string& slot, const SourceLoc& loc, const std::string& what)
{
    if (!d.find_slot(slot))
        throw Error(loc.str() + ": " + what + " references slot \"" + slot + "\" absent from domain \"" + d.name + "\"");
}

void check_expr_slots(const Expr& e, const DomainDef& d, const SourceLoc& loc)
{
    if (e.kind == Expr::Kind::pair) check_slot(d, e.slot, loc, "expression");
    for (const auto& p : e.parts) check_expr_slots(p, d, loc);
}

void check_operand_slots(const Operand& o, const DomainDef& d, const SourceLoc& loc)
{
    if (o.kind == Operand::Kind::slot) check_slot(d, o.slot, loc, "guard");
    for (const auto& p : o.parts) check_operand_slots(p, d, loc);
}

void check_action_slots(const SemanticAction& a, const DomainDef& d)
{
    for (const auto& g : a.guards) {
        check_operand_slots(g.a, d, g.loc);
        check_operand_slots(g.b, d, g.loc);
        if (g.kind == Guard::Kind::eq) {
            if (g.x.kind == Term::Kind::slot) check_slot(d, g.x.text, g.loc, "guard");
            if (g.y.kind == Term::Kind::slot) check_slot(d, g.y.text, g.loc, "guard");
        }
    }
    for (const auto& e : a.effects)
        if ((e.kind == Effect::Kind::set_slot && e.capture < 0) || e.kind == Effect::Kind::clear_slot)
            check_slot(d, e.name, e.loc, "effect");
}

}  // namespace

BoundGrammar bind_ontology(const Grammar& g, const DialogueModel& model, const Ontology& ont, std::string_view domain,
                           std::vector<std::string>* warnings)
{
    const DomainDef& dom = ont.domain(domain);
    BoundGrammar bg;
    bg.model_ = model;
    bg.domain_ = dom.name;
    bg.grammar_hash_ = g.hash();
    for (const auto& s : dom.slots) bg.domain_slots_.push_back(s.name);

    for (const auto& nt : g.nonterminals()) {
        bg.nt_index_[nt.name] = static_cast<int>(bg.nonterminals_.size());
        bg.nonterminals_.push_back({nt.name, nt.kind, {}});
    }

    auto add_literal = [&](int lhs, std::vector<BoundItem> rhs, std::string surface, SemValue value) {
        BoundProduction bp;
        bp.lhs = lhs;
        bp.rhs = std::move(rhs);
        bp.all_literal = true;
        bp.literal_surface = std::move(surface);
        bp.literal_value = std::move(value);
        bg.nonterminals_[static_cast<std::size_t>(lhs)].productions.push_back(static_cast<int>(bg.productions_.size()));
        bg.productions_.push_back(std::move(bp));
    };

    for (const auto& p : g.productions()) {
        if (p.kind != ProductionKind::phrase) continue;
        if (p.action.result) check_expr_slots(*p.action.result, dom, p.loc);
        BoundProduction bp;
        bp.lhs = bg.nt_index_.at(p.lhs);
        bp.action = p.action;
        bp.all_literal = true;
        for (const auto& it : p.rhs) {
            BoundItem bi;
            bi.literal = it.kind == Item::Kind::literal;
            bi.text = it.text;
            if (!bi.literal) {
                bi.nt = bg.nt_index_.at(it.nt);
                bi.capture = it.capture;
                bp.capture_nts.push_back(bi.nt);
                bp.all_literal = false;
            }
            bp.rhs.push_back(std::move(bi));
        }
        if (bp.all_literal) {
            bool pass = true;
            for (const auto& gd : bp.action.guards) pass = pass && eval_guard(gd, {}, {});
            if (pass) {
                for (const auto& it : bp.rhs) append_surface(bp.literal_surface, it.text);
                bp.literal_value = bp.action.result ? eval_expr(*bp.action.result, {}) : SemValue::make_set({});
            }
        }
        bg.nonterminals_[static_cast<std::size_t>(bp.lhs)].productions.push_back(
            static_cast<int>(bg.productions_.size()));
        bg.productions_.push_back(std::move(bp));
    }

    for (const auto& hk : g.hooks()) {
        int lhs = bg.nt_index_.at(hk.nt);
        if (hk.kind == HookKind::subject) {
            for (const auto& s : dom.subjects) add_literal(lhs, {{true, s, -1, -1}}, s, SemValue::make_set({}));
            continue;
        }
        const SlotDef* slot = dom.find_slot(hk.slot);
        if (!slot)
            throw Error(hk.loc.str() + ": template for " + hk.nt + " references slot \"" + hk.slot +
                        "\" absent from domain \"" + dom.name + "\"");
        if (hk.result) check_expr_slots(*hk.result, dom, hk.loc);
        if (hk.kind == HookKind::names) {
            for (const auto& pat : hk.patterns) {
                std::vector<BoundItem> rhs;
                std::string surface;
                for (const auto& piece : pat) {
                    rhs.push_back({true, piece.text, -1, -1});
                    append_surface(surface, piece.text);
                }
                add_literal(lhs, std::move(rhs), std::move(surface), SemValue::make_pair(slot->name, SlotValue::requested()));
            }
            continue;
        }
        if (slot->values.empty())
            throw Error(hk.loc.str() + ": slot \"" + slot->name + "\" has no values in domain \"" + dom.name + "\"");
        for (const auto& pat : hk.patterns) {
            for (const auto& v : slot->values) {
                std::vector<BoundItem> rhs;
                std::string surface;
                for (const auto& piece : pat) {
                    const std::string& text = piece.is_value ? v : piece.text;
                    rhs.push_back({true, text, -1, -1});
                    append_surface(surface, text);
                }
                std::optional<SemValue> value =
                    hk.result ? eval_expr(*hk.result, {}, v) : SemValue::make_pair(slot->name, SlotValue::of(v));
                if (!value) throw Error(hk.loc.str() + ": template result binds a slot twice");
                add_literal(lhs, std::move(rhs), std::move(surface), std::move(*value));
            }
        }
    }

    bg.by_transition_.resize(model.transitions().size());
    for (const auto& p : g.productions()) {
        if (p.kind != ProductionKind::turn_template) continue;
        const Transition* tr = model.find_transition(p.transition_id);
        if (!tr)
            throw Error(p.loc.str() + ": template " + p.template_id + " uses unknown transition \"" +
                        p.transition_id + "\"");
        check_action_slots(p.action, dom);
        TurnTemplate t;
        t.id = p.template_id;
        t.transition = static_cast<std::size_t>(tr - model.transitions().data());
        t.capture_names = p.captures;
        t.action = p.action;
        const Effect* last_abstract = nullptr;
        for (const auto& e : t.action.effects) {
            if (e.kind != Effect::Kind::set_abstract) continue;
            if (!model.find_state(e.name))
                throw Error(e.loc.str() + ": template " + t.id + " sets unknown abstract state \"" + e.name + "\"");
            last_abstract = &e;
        }
        if (!last_abstract) {
            Effect e;
            e.kind = Effect::Kind::set_abstract;
            e.name = tr->to_state;
            t.action.effects.push_back(e);
        } else if (last_abstract->name != tr->to_state) {
            throw Error(last_abstract->loc.str() + ": template " + t.id + " ends in " + last_abstract->name +
                        " but transition " + tr->id + " goes to " + tr->to_state);
        }
        for (std::size_t i = 0; i < p.rhs.size(); ++i) {
            const Item& it = p.rhs[i];
            BoundItem bi;
            bi.literal = it.kind == Item::Kind::literal;
            bi.text = it.text;
            if (!bi.literal) {
                bi.nt = bg.nt_index_.at(it.nt);
                bi.capture = it.capture;
                t.capture_nts.push_back(bi.nt);
            }
            (i < p.sep ? t.agent : t.user).push_back(std::move(bi));
        }
        t.unary_guards.resize(t.capture_names.size());
        for (std::size_t gi = 0; gi < t.action.guards.size(); ++gi) {
            auto caps = guard_captures(t.action.guards[gi]);
            if (caps.empty())
                t.state_guards.push_back(static_cast<int>(gi));
            else if (caps.size() == 1)
                t.unary_guards[static_cast<std::size_t>(caps.front())].push_back(static_cast<int>(gi));
            else
                t.nary_guards.push_back(static_cast<int>(gi));
        }
        bg.template_index_[t.id] = bg.templates_.size();
        bg.by_transition_[t.transition].push_back(bg.templates_.size());
        bg.templates_.push_back(std::move(t));
    }

    if (warnings) {
        for (std::size_t i = 0; i < bg.by_transition_.size(); ++i)
            if (bg.by_transition_[i].empty())
                warnings->push_back("transition " + model.transitions()[i].id + " has no turn templates");
    }
    return bg;
}

}  // namespace dialsynth

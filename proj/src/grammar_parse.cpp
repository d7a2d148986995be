#include "dialsynth/grammar.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dialsynth {

namespace fs = std::filesystem;

std::vector<TemplateSource> load_template_dir(const std::string& dir, std::string_view domain)
{
    if (!fs::is_directory(dir)) throw Error("template directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".tmpl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    fs::path dom = fs::path(dir) / "domains" / (std::string(domain) + ".tmpl");
    if (fs::is_regular_file(dom)) files.push_back(dom);

    std::vector<TemplateSource> out;
    for (const auto& p : files) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw Error("cannot read template file " + p.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        out.push_back({p.string(), ss.str()});
    }
    return out;
}

const NonTerminal* Grammar::find_nonterminal(std::string_view name) const
{
    for (const auto& n : nonterminals_)
        if (n.name == name) return &n;
    return nullptr;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

struct Token {
    enum Kind { ident, var, string, sym, end };
    Kind kind = end;
    std::string text;
    SourceLoc loc;
};

std::vector<Token> lex(const TemplateSource& src)
{
    std::vector<Token> out;
    const std::string& s = src.text;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto here = [&] { return SourceLoc{src.name, line, col}; };
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < s.size(); ++k, ++i) {
            if (s[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };

    while (i < s.size()) {
        char c = s[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < s.size() && s[i + 1] == '/')) {
            while (i < s.size() && s[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.loc = here();
        if (ident_start(c)) {
            std::size_t j = i;
            while (j < s.size() && ident_char(s[j])) ++j;
            t.kind = Token::ident;
            t.text = s.substr(i, j - i);
            advance(j - i);
        } else if (c == '$') {
            std::size_t j = i + 1;
            if (j >= s.size() || !ident_start(s[j])) throw ParseError(t.loc, "expected a capture name after '$'");
            while (j < s.size() && ident_char(s[j])) ++j;
            t.kind = Token::var;
            t.text = s.substr(i + 1, j - i - 1);
            advance(j - i);
        } else if (c == '"') {
            advance(1);
            t.kind = Token::string;
            for (;;) {
                if (i >= s.size() || s[i] == '\n') throw ParseError(t.loc, "unterminated string literal");
                if (s[i] == '"') {
                    advance(1);
                    break;
                }
                if (s[i] == '\\') {
                    if (i + 1 >= s.size()) throw ParseError(here(), "dangling escape");
                    char e = s[i + 1];
                    if (e == '"' || e == '\\')
                        t.text += e;
                    else if (e == 'n')
                        t.text += '\n';
                    else
                        throw ParseError(here(), std::string("unknown escape \\") + e);
                    advance(2);
                    continue;
                }
                t.text += s[i];
                advance(1);
            }
        } else {
            static const char* two[] = {":=", "=>"};
            bool matched = false;
            for (const char* sym : two) {
                if (s.compare(i, 2, sym) == 0) {
                    t.kind = Token::sym;
                    t.text = sym;
                    advance(2);
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                if (std::string_view("|;(){},.@").find(c) == std::string_view::npos)
                    throw ParseError(t.loc, std::string("unexpected character '") + c + "'");
                t.kind = Token::sym;
                t.text = std::string(1, c);
                advance(1);
            }
        }
        out.push_back(std::move(t));
    }
    Token e;
    e.kind = Token::end;
    e.loc = here();
    out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Parser

struct RawItem {
    Item::Kind kind = Item::Kind::literal;
    std::string text;
    std::string nt;
    std::string capture;
    SourceLoc loc;
};

using RawSeq = std::vector<RawItem>;

struct RawStatement {
    enum Kind { rule, turn } kind = rule;
    std::string name;  // lhs or template id
    std::string transition;
    std::vector<RawSeq> alts;
    SemanticAction action;
    SourceLoc loc;
    SourceLoc expr_loc;
};

constexpr std::size_t kMaxAlternatives = 20000;

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    void run(std::vector<RawStatement>& stmts, std::vector<DomainHook>& hooks)
    {
        while (peek().kind != Token::end) {
            const Token& kw = peek();
            if (kw.kind != Token::ident) fail(kw, "expected a statement keyword");
            if (kw.text == "rule")
                stmts.push_back(parse_rule());
            else if (kw.text == "turn")
                stmts.push_back(parse_turn());
            else if (kw.text == "values" || kw.text == "names" || kw.text == "info" || kw.text == "subject")
                hooks.push_back(parse_hook());
            else
                fail(kw, "unknown statement \"" + kw.text + "\"");
        }
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;

    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    [[noreturn]] static void fail(const Token& t, const std::string& msg)
    {
        std::string found = t.kind == Token::end ? "end of input" : "'" + t.text + "'";
        throw ParseError(t.loc, msg + " (found " + found + ")");
    }

    bool is_sym(std::string_view s, std::size_t k = 0) const
    {
        return peek(k).kind == Token::sym && peek(k).text == s;
    }
    bool is_kw(std::string_view s) const { return peek().kind == Token::ident && peek().text == s; }
    bool accept(std::string_view s)
    {
        if (!is_sym(s)) return false;
        ++pos_;
        return true;
    }
    void expect(std::string_view s)
    {
        if (!accept(s)) fail(peek(), "expected '" + std::string(s) + "'");
    }
    void expect_kw(std::string_view s)
    {
        if (!is_kw(s)) fail(peek(), "expected \"" + std::string(s) + "\"");
        ++pos_;
    }
    std::string expect_ident(const char* what)
    {
        if (peek().kind != Token::ident) fail(peek(), std::string("expected ") + what);
        return next().text;
    }

    RawStatement parse_rule()
    {
        RawStatement st;
        st.kind = RawStatement::rule;
        st.loc = next().loc;
        st.name = expect_ident("a non-terminal name");
        expect(":=");
        st.alts = parse_alts();
        if (is_kw("action")) parse_action_block(st.action);
        if (is_sym("=>")) {
            st.expr_loc = next().loc;
            st.action.result = parse_expr();
        }
        expect(";");
        return st;
    }

    RawStatement parse_turn()
    {
        RawStatement st;
        st.kind = RawStatement::turn;
        st.loc = next().loc;
        st.name = expect_ident("a template id");
        expect_kw("on");
        st.transition = expect_ident("a transition id");
        expect(":=");
        st.alts = parse_alts();
        if (is_kw("action")) parse_action_block(st.action);
        if (is_sym("=>")) fail(peek(), "turn templates take an action block, not a result expression");
        expect(";");
        return st;
    }

    std::vector<RawSeq> parse_alts()
    {
        std::vector<RawSeq> alts;
        for (;;) {
            auto seqs = parse_seq();
            alts.insert(alts.end(), seqs.begin(), seqs.end());
            if (alts.size() > kMaxAlternatives) fail(peek(), "too many alternatives");
            if (!accept("|")) break;
        }
        return alts;
    }

    // One alternative; parenthesized groups expand it into several.
    std::vector<RawSeq> parse_seq()
    {
        std::vector<RawSeq> acc{RawSeq{}};
        bool any = false;
        for (;;) {
            const Token& t = peek();
            if (t.kind == Token::string) {
                RawItem it{Item::Kind::literal, t.text, {}, {}, t.loc};
                next();
                for (auto& s : acc) s.push_back(it);
            } else if (t.kind == Token::ident && t.text != "action") {
                RawItem it{Item::Kind::ref, {}, t.text, to_lower(t.text), t.loc};
                next();
                if (accept("@")) it.capture = expect_ident("a capture name");
                for (auto& s : acc) s.push_back(it);
            } else if (is_sym("(")) {
                next();
                auto group = parse_alts();
                expect(")");
                std::vector<RawSeq> grown;
                for (const auto& a : acc)
                    for (const auto& g : group) {
                        RawSeq s = a;
                        s.insert(s.end(), g.begin(), g.end());
                        grown.push_back(std::move(s));
                    }
                if (grown.size() > kMaxAlternatives) fail(t, "too many alternatives");
                acc = std::move(grown);
            } else {
                break;
            }
            any = true;
        }
        if (!any) fail(peek(), "expected a literal, non-terminal or group");
        return acc;
    }

    void parse_action_block(SemanticAction& a)
    {
        expect_kw("action");
        expect("{");
        while (!accept("}")) {
            const Token& t = peek();
            if (t.kind != Token::ident) fail(t, "expected 'require' or an effect");
            if (t.text == "require") {
                next();
                a.guards.push_back(parse_guard());
            } else {
                a.effects.push_back(parse_effect());
            }
            expect(";");
        }
    }

    Guard parse_guard()
    {
        if (is_kw("not")) {
            next();
            Guard g = parse_guard();
            g.negated = !g.negated;
            return g;
        }
        Guard g;
        g.loc = peek().loc;
        std::string kind = expect_ident("a guard");
        expect("(");
        if (kind == "absent" || kind == "present" || kind == "requested") {
            g.kind = kind == "absent"    ? Guard::Kind::absent
                     : kind == "present" ? Guard::Kind::present
                                         : Guard::Kind::requested;
            g.a = parse_operand();
        } else if (kind == "disjoint" || kind == "consistent") {
            g.kind = kind == "disjoint" ? Guard::Kind::disjoint : Guard::Kind::consistent;
            g.a = parse_operand();
            expect(",");
            g.b = parse_operand();
        } else if (kind == "eq") {
            g.kind = Guard::Kind::eq;
            g.x = parse_term();
            expect(",");
            g.y = parse_term();
        } else {
            throw ParseError(g.loc, "unknown guard \"" + kind + "\"");
        }
        expect(")");
        return g;
    }

    Operand parse_operand()
    {
        Operand o;
        const Token& t = peek();
        if (t.kind == Token::var) {
            o.kind = Operand::Kind::capture;
            o.var = next().text;
        } else if (t.kind == Token::ident && t.text == "state" && is_sym(".", 1)) {
            next();
            next();
            if (expect_ident("\"slots\"") != "slots") fail(toks_[pos_ - 1], "expected state.slots");
            o.kind = Operand::Kind::state_slots;
        } else if (t.kind == Token::ident && t.text == "union" && is_sym("(", 1)) {
            next();
            next();
            o.kind = Operand::Kind::union_of;
            do {
                o.parts.push_back(parse_operand());
            } while (accept(","));
            expect(")");
        } else if (t.kind == Token::ident) {
            o.kind = Operand::Kind::slot;
            o.slot = next().text;
        } else {
            fail(t, "expected an operand");
        }
        return o;
    }

    Term parse_term()
    {
        Term t;
        const Token& tok = peek();
        if (tok.kind == Token::string) {
            t.kind = Term::Kind::literal;
            t.text = next().text;
        } else if (tok.kind == Token::var) {
            t.var = next().text;
            t.kind = Term::Kind::capture;
            if (accept(".")) {
                std::string field = expect_ident("\"name\" or \"value\"");
                if (field == "name")
                    t.kind = Term::Kind::capture_name;
                else if (field == "value")
                    t.kind = Term::Kind::capture_value;
                else
                    fail(toks_[pos_ - 1], "expected \"name\" or \"value\"");
            }
        } else if (tok.kind == Token::ident) {
            t.kind = Term::Kind::slot;
            t.text = next().text;
        } else {
            fail(tok, "expected a term");
        }
        return t;
    }

    Effect parse_effect()
    {
        Effect e;
        e.loc = peek().loc;
        std::string kw = next().text;
        if (kw == "abstract") {
            e.kind = Effect::Kind::set_abstract;
            e.name = expect_ident("an abstract state name");
        } else if (kw == "set") {
            e.kind = Effect::Kind::set_slot;
            if (peek().kind == Token::var) {
                e.var = next().text;
                expect(".");
                if (expect_ident("\"name\"") != "name") fail(toks_[pos_ - 1], "expected $x.name as set target");
            } else {
                e.name = expect_ident("a slot name or $x.name");
            }
            const Token& v = peek();
            if (v.kind == Token::string) {
                next();
                if (v.text == "?") {
                    e.value = Effect::Value::requested;
                } else {
                    if (v.text.empty()) throw ParseError(v.loc, "slot values must be nonempty");
                    e.value = Effect::Value::literal;
                    e.value_text = v.text;
                }
            } else if (v.kind == Token::ident && v.text == "dontcare") {
                next();
                e.value = Effect::Value::dontcare;
            } else if (v.kind == Token::var) {
                e.value_var = next().text;
                e.value = Effect::Value::capture;
                if (accept(".")) {
                    if (expect_ident("\"value\"") != "value") fail(toks_[pos_ - 1], "expected $x.value");
                    e.value = Effect::Value::capture_value;
                }
            } else {
                fail(v, "expected a slot value");
            }
        } else if (kw == "merge") {
            e.kind = Effect::Kind::merge;
            if (peek().kind != Token::var) fail(peek(), "expected a capture after merge");
            e.var = next().text;
        } else if (kw == "clear") {
            if (peek().kind == Token::var) {
                e.kind = Effect::Kind::clear_capture;
                e.var = next().text;
            } else {
                std::string what = expect_ident("a slot name");
                if (what == "requested") {
                    e.kind = Effect::Kind::clear_requested;
                } else {
                    e.kind = Effect::Kind::clear_slot;
                    e.name = what;
                }
            }
        } else {
            throw ParseError(e.loc, "unknown effect \"" + kw + "\"");
        }
        return e;
    }

    Expr parse_expr()
    {
        Expr e;
        const Token& t = peek();
        if (t.kind == Token::var) {
            e.kind = Expr::Kind::capture;
            e.var = next().text;
        } else if (t.kind == Token::string) {
            e.kind = Expr::Kind::literal;
            e.text = next().text;
        } else if (t.kind == Token::ident && t.text == "empty") {
            next();
            e.kind = Expr::Kind::empty;
        } else if (t.kind == Token::ident && t.text == "union") {
            next();
            expect("(");
            e.kind = Expr::Kind::union_of;
            do {
                e.parts.push_back(parse_expr());
            } while (accept(","));
            expect(")");
        } else if (t.kind == Token::ident && t.text == "pair") {
            next();
            expect("(");
            e.kind = Expr::Kind::pair;
            e.slot = expect_ident("a slot name");
            expect(",");
            const Token& v = peek();
            if (v.kind == Token::var) {
                e.var = next().text;
                e.pair_value = Expr::PairValue::capture;
            } else if (v.kind == Token::string) {
                next();
                if (v.text == "?") {
                    e.pair_value = Expr::PairValue::requested;
                } else {
                    if (v.text.empty()) throw ParseError(v.loc, "slot values must be nonempty");
                    e.pair_value = Expr::PairValue::literal;
                    e.text = v.text;
                }
            } else if (v.kind == Token::ident && v.text == "dontcare") {
                next();
                e.pair_value = Expr::PairValue::dontcare;
            } else {
                fail(v, "expected a pair value");
            }
            expect(")");
        } else {
            fail(t, "expected an expression");
        }
        return e;
    }

    DomainHook parse_hook()
    {
        DomainHook h;
        h.loc = peek().loc;
        std::string kw = next().text;
        h.kind = kw == "values" ? HookKind::values
                 : kw == "names" ? HookKind::names
                 : kw == "info"  ? HookKind::info
                                 : HookKind::subject;
        h.nt = expect_ident("a non-terminal name");
        if (h.kind == HookKind::subject) {
            expect(";");
            return h;
        }
        expect_kw("from");
        expect_kw("slot");
        h.slot = expect_ident("a slot name");
        if (accept(":=")) {
            do {
                std::vector<PatternPiece> pat;
                while (peek().kind == Token::string || peek().kind == Token::var) {
                    const Token& t = next();
                    if (t.kind == Token::var) {
                        if (t.text != "value") throw ParseError(t.loc, "only $value may appear in a slot pattern");
                        if (h.kind == HookKind::names)
                            throw ParseError(t.loc, "slot name templates cannot use $value");
                        pat.push_back({true, {}});
                    } else {
                        pat.push_back({false, t.text});
                    }
                }
                if (pat.empty()) fail(peek(), "expected a pattern");
                h.patterns.push_back(std::move(pat));
            } while (accept("|"));
        }
        if (h.patterns.empty()) {
            if (h.kind != HookKind::values) fail(peek(), "expected ':=' and patterns");
            h.patterns.push_back({{true, {}}});
        }
        if (is_sym("=>")) {
            const Token& arrow = next();
            if (h.kind == HookKind::names) fail(arrow, "slot name templates have a fixed value");
            h.result = parse_expr();
        }
        expect(";");
        return h;
    }
};

// ---------------------------------------------------------------------------
// Capture resolution and static checks

struct CaptureScope {
    const std::vector<std::string>& names;
    bool hook = false;

    int find(const std::string& var, const SourceLoc& loc) const
    {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == var) return static_cast<int>(i);
        throw ParseError(loc, "action references unbound capture $" + var);
    }
};

void resolve(Operand& o, const CaptureScope& sc, const SourceLoc& loc)
{
    if (o.kind == Operand::Kind::capture) o.capture = sc.find(o.var, loc);
    for (auto& p : o.parts) resolve(p, sc, loc);
}

void resolve(Term& t, const CaptureScope& sc, const SourceLoc& loc)
{
    if (t.kind == Term::Kind::capture || t.kind == Term::Kind::capture_name || t.kind == Term::Kind::capture_value)
        t.capture = sc.find(t.var, loc);
}

void resolve(Expr& e, const CaptureScope& sc, const SourceLoc& loc)
{
    if (sc.hook) {
        if (e.kind == Expr::Kind::capture) throw ParseError(loc, "use pair(slot, $value) in a slot template");
        if (e.kind == Expr::Kind::pair && e.pair_value == Expr::PairValue::capture) {
            if (e.var != "value") throw ParseError(loc, "only $value may appear in a slot template");
            e.pair_value = Expr::PairValue::hook_value;
        }
    } else if (e.kind == Expr::Kind::capture || (e.kind == Expr::Kind::pair && e.pair_value == Expr::PairValue::capture)) {
        e.capture = sc.find(e.var, loc);
    }
    for (auto& p : e.parts) resolve(p, sc, loc);
}

void resolve(SemanticAction& a, const CaptureScope& sc, const SourceLoc& expr_loc)
{
    for (auto& g : a.guards) {
        resolve(g.a, sc, g.loc);
        resolve(g.b, sc, g.loc);
        resolve(g.x, sc, g.loc);
        resolve(g.y, sc, g.loc);
    }
    for (auto& e : a.effects) {
        if (!e.var.empty()) e.capture = sc.find(e.var, e.loc);
        if (!e.value_var.empty()) e.value_capture = sc.find(e.value_var, e.loc);
    }
    if (a.result) resolve(*a.result, sc, expr_loc);
}

std::vector<Operand> flatten(const Operand& o)
{
    if (o.kind != Operand::Kind::union_of) return {o};
    std::vector<Operand> out;
    for (const auto& p : o.parts) {
        auto f = flatten(p);
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

// Splits guards over unions so each guard reads as few captures as possible.
std::vector<Guard> distribute(const std::vector<Guard>& guards)
{
    std::vector<Guard> out;
    for (const auto& g : guards) {
        if (g.negated) {
            out.push_back(g);
            continue;
        }
        switch (g.kind) {
        case Guard::Kind::absent:
        case Guard::Kind::present:
        case Guard::Kind::requested:
            for (auto& a : flatten(g.a)) {
                Guard c = g;
                c.a = a;
                out.push_back(std::move(c));
            }
            break;
        case Guard::Kind::disjoint:
        case Guard::Kind::consistent:
            for (auto& a : flatten(g.a))
                for (auto& b : flatten(g.b)) {
                    Guard c = g;
                    c.a = a;
                    c.b = b;
                    out.push_back(std::move(c));
                }
            break;
        case Guard::Kind::eq: out.push_back(g); break;
        }
    }
    return out;
}

bool mentions_state(const Operand& o)
{
    if (o.kind == Operand::Kind::state_slots || o.kind == Operand::Kind::slot) return true;
    for (const auto& p : o.parts)
        if (mentions_state(p)) return true;
    return false;
}

struct KindTable {
    std::map<std::string, std::optional<ValueKind>> kinds;
};

std::optional<ValueKind> join(std::optional<ValueKind> a, std::optional<ValueKind> b, bool& conflict)
{
    if (!a) return b;
    if (!b) return a;
    if (*a == *b) return a;
    bool sa = *a == ValueKind::slot_pair || *a == ValueKind::slot_set;
    bool sb = *b == ValueKind::slot_pair || *b == ValueKind::slot_set;
    if (sa && sb) return ValueKind::slot_set;
    conflict = true;
    return a;
}

std::optional<ValueKind> expr_kind(const Expr& e, const std::vector<std::optional<ValueKind>>& cap_kinds)
{
    switch (e.kind) {
    case Expr::Kind::capture: return cap_kinds[static_cast<std::size_t>(e.capture)];
    case Expr::Kind::empty:
    case Expr::Kind::union_of: return ValueKind::slot_set;
    case Expr::Kind::pair: return ValueKind::slot_pair;
    case Expr::Kind::literal: return ValueKind::scalar;
    }
    return std::nullopt;
}

bool is_slots(ValueKind k)
{
    return k == ValueKind::slot_pair || k == ValueKind::slot_set;
}

}  // namespace

Grammar parse_templates(const std::vector<TemplateSource>& sources)
{
    std::vector<RawStatement> stmts;
    std::vector<DomainHook> hooks;
    uint64_t h = fnv1a("dialsynth-grammar");
    for (const auto& src : sources) {
        Parser(lex(src)).run(stmts, hooks);
        h = fnv1a(src.text, fnv1a(std::string_view("\x1f", 1), h));
    }

    Grammar g;
    g.hash_ = h;

    // Declared non-terminals, in order of first definition.
    std::map<std::string, std::size_t> nt_index;
    auto declare = [&](const std::string& name, const SourceLoc& loc) {
        if (nt_index.emplace(name, g.nonterminals_.size()).second)
            g.nonterminals_.push_back({name, ValueKind::slot_set, loc});
    };
    for (const auto& st : stmts)
        if (st.kind == RawStatement::rule) declare(st.name, st.loc);
    for (const auto& hk : hooks) declare(hk.nt, hk.loc);

    std::set<std::string> template_ids;
    for (auto& st : stmts) {
        for (std::size_t ai = 0; ai < st.alts.size(); ++ai) {
            const RawSeq& seq = st.alts[ai];
            Production p;
            p.kind = st.kind == RawStatement::rule ? ProductionKind::phrase : ProductionKind::turn_template;
            p.loc = seq.empty() ? st.loc : seq.front().loc;
            std::size_t seps = 0;
            for (const auto& it : seq) {
                if (it.kind == Item::Kind::literal && it.text == kSepToken) {
                    if (p.kind == ProductionKind::phrase)
                        throw ParseError(it.loc, "the <sep> delimiter is only allowed in turn templates");
                    if (++seps > 1) throw ParseError(it.loc, "turn template has more than one <sep> delimiter");
                    p.sep = p.rhs.size();
                    continue;
                }
                Item item;
                item.kind = it.kind;
                item.loc = it.loc;
                if (it.kind == Item::Kind::literal) {
                    if (it.text.find(kSepToken) != std::string::npos)
                        throw ParseError(it.loc, "literal contains the reserved <sep> token");
                    item.text = it.text;
                } else {
                    if (!nt_index.count(it.nt)) throw ParseError(it.loc, "unknown non-terminal " + it.nt);
                    item.nt = it.nt;
                    if (std::find(p.captures.begin(), p.captures.end(), it.capture) != p.captures.end())
                        throw ParseError(it.loc, "duplicate capture name \"" + it.capture + "\"; use NT@name");
                    item.capture = static_cast<int>(p.captures.size());
                    p.captures.push_back(it.capture);
                }
                p.rhs.push_back(std::move(item));
            }
            if (p.kind == ProductionKind::turn_template) {
                if (seps == 0) throw ParseError(p.loc, "turn template " + st.name + " is missing the <sep> delimiter");
                p.template_id = st.alts.size() == 1 ? st.name : st.name + "." + std::to_string(ai + 1);
                if (!template_ids.insert(p.template_id).second)
                    throw ParseError(st.loc, "duplicate template id " + p.template_id);
                p.transition_id = st.transition;
            } else {
                p.lhs = st.name;
                if (p.rhs.empty()) throw ParseError(st.loc, "phrase rule " + st.name + " has an empty alternative");
                if (!st.action.effects.empty())
                    throw ParseError(st.action.effects.front().loc, "phrase rules cannot have effects");
                for (const auto& gd : st.action.guards) {
                    bool reads_state = false;
                    switch (gd.kind) {
                    case Guard::Kind::absent:
                    case Guard::Kind::present:
                    case Guard::Kind::requested: reads_state = true; break;
                    case Guard::Kind::disjoint:
                    case Guard::Kind::consistent: reads_state = mentions_state(gd.a) || mentions_state(gd.b); break;
                    case Guard::Kind::eq:
                        reads_state = gd.x.kind == Term::Kind::slot || gd.y.kind == Term::Kind::slot;
                        break;
                    }
                    if (reads_state) throw ParseError(gd.loc, "phrase rule guards can only read captures");
                }
            }
            p.action = st.action;
            resolve(p.action, CaptureScope{p.captures, false}, st.expr_loc);
            p.action.guards = distribute(p.action.guards);
            g.productions_.push_back(std::move(p));
        }
    }

    for (auto& hk : hooks) {
        if (hk.result) {
            std::vector<std::string> none;
            SemanticAction tmp;
            tmp.result = hk.result;
            resolve(tmp, CaptureScope{none, true}, hk.loc);
            hk.result = tmp.result;
        }
    }
    g.hooks_ = hooks;

    // Value kinds: least fixpoint over productions and hooks.
    std::vector<std::optional<ValueKind>> kinds(g.nonterminals_.size());
    for (const auto& hk : g.hooks_) {
        std::optional<ValueKind> k =
            hk.kind == HookKind::subject ? ValueKind::slot_set
            : hk.result                  ? expr_kind(*hk.result, {})
                                         : std::optional<ValueKind>(ValueKind::slot_pair);
        bool conflict = false;
        auto& slot = kinds[nt_index[hk.nt]];
        slot = join(slot, k, conflict);
        if (conflict) throw ParseError(hk.loc, "non-terminal " + hk.nt + " mixes scalar and slot values");
    }
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& p : g.productions_) {
            if (p.kind != ProductionKind::phrase) continue;
            std::optional<ValueKind> k = ValueKind::slot_set;
            if (p.action.result) {
                std::vector<std::optional<ValueKind>> ck;
                for (const auto& it : p.rhs)
                    if (it.kind == Item::Kind::ref) ck.push_back(kinds[nt_index[it.nt]]);
                k = expr_kind(*p.action.result, ck);
            }
            if (!k) continue;
            bool conflict = false;
            auto& slot = kinds[nt_index[p.lhs]];
            auto joined = join(slot, k, conflict);
            if (conflict) throw ParseError(p.loc, "non-terminal " + p.lhs + " mixes scalar and slot values");
            if (joined != slot) {
                slot = joined;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < kinds.size(); ++i)
        g.nonterminals_[i].kind = kinds[i].value_or(ValueKind::slot_set);

    // Operand type checks.
    for (const auto& p : g.productions_) {
        std::vector<ValueKind> ck;
        for (const auto& it : p.rhs)
            if (it.kind == Item::Kind::ref) ck.push_back(g.nonterminals_[nt_index[it.nt]].kind);
        auto need_slots = [&](int c, const SourceLoc& loc) {
            if (!is_slots(ck[static_cast<std::size_t>(c)]))
                throw ParseError(loc, "capture $" + p.captures[static_cast<std::size_t>(c)] +
                                          " holds a scalar where slots are expected");
        };
        auto need_pair = [&](int c, const SourceLoc& loc) {
            if (ck[static_cast<std::size_t>(c)] != ValueKind::slot_pair)
                throw ParseError(loc, "capture $" + p.captures[static_cast<std::size_t>(c)] +
                                          " is not a single slot-value pair");
        };
        auto need_value = [&](int c, const SourceLoc& loc) {
            auto k = ck[static_cast<std::size_t>(c)];
            if (k != ValueKind::scalar && k != ValueKind::slot_pair)
                throw ParseError(loc, "capture $" + p.captures[static_cast<std::size_t>(c)] +
                                          " must be a scalar or a single pair");
        };
        std::function<void(const Operand&, const SourceLoc&)> check_op = [&](const Operand& o, const SourceLoc& loc) {
            if (o.kind == Operand::Kind::capture) need_slots(o.capture, loc);
            for (const auto& q : o.parts) check_op(q, loc);
        };
        auto check_term = [&](const Term& t, const SourceLoc& loc) {
            if (t.kind == Term::Kind::capture) need_value(t.capture, loc);
            if (t.kind == Term::Kind::capture_name || t.kind == Term::Kind::capture_value) need_pair(t.capture, loc);
        };
        for (const auto& gd : p.action.guards) {
            if (gd.kind == Guard::Kind::eq) {
                check_term(gd.x, gd.loc);
                check_term(gd.y, gd.loc);
            } else {
                check_op(gd.a, gd.loc);
                if (gd.kind == Guard::Kind::disjoint || gd.kind == Guard::Kind::consistent) check_op(gd.b, gd.loc);
            }
        }
        for (const auto& e : p.action.effects) {
            if (e.kind == Effect::Kind::set_slot && e.capture >= 0) need_pair(e.capture, e.loc);
            if (e.kind == Effect::Kind::set_slot && e.value == Effect::Value::capture_value)
                need_pair(e.value_capture, e.loc);
            if (e.kind == Effect::Kind::set_slot && e.value == Effect::Value::capture) need_value(e.value_capture, e.loc);
            if (e.kind == Effect::Kind::merge || e.kind == Effect::Kind::clear_capture) need_slots(e.capture, e.loc);
        }
        if (p.action.result) {
            std::function<void(const Expr&)> check_expr = [&](const Expr& e) {
                if (e.kind == Expr::Kind::union_of)
                    for (const auto& q : e.parts) {
                        if (q.kind == Expr::Kind::literal)
                            throw ParseError(p.loc, "union() parts must be slot values");
                        if (q.kind == Expr::Kind::capture) need_slots(q.capture, p.loc);
                        check_expr(q);
                    }
                if (e.kind == Expr::Kind::pair && e.pair_value == Expr::PairValue::capture) need_value(e.capture, p.loc);
            };
            check_expr(*p.action.result);
        }
    }

    // Productivity: every non-terminal must derive an all-literal string.
    std::vector<char> productive(g.nonterminals_.size(), 0);
    for (const auto& hk : g.hooks_) productive[nt_index[hk.nt]] = 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& p : g.productions_) {
            if (p.kind != ProductionKind::phrase) continue;
            std::size_t lhs = nt_index[p.lhs];
            if (productive[lhs]) continue;
            bool ok = std::all_of(p.rhs.begin(), p.rhs.end(), [&](const Item& it) {
                return it.kind == Item::Kind::literal || productive[nt_index[it.nt]];
            });
            if (ok) {
                productive[lhs] = 1;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < productive.size(); ++i) {
        if (productive[i]) continue;
        // Walk unproductive references until a non-terminal repeats.
        std::vector<std::size_t> path{i};
        std::size_t cur = i;
        for (;;) {
            std::size_t nextnt = cur;
            for (const auto& p : g.productions_) {
                if (p.kind != ProductionKind::phrase || nt_index[p.lhs] != cur) continue;
                for (const auto& it : p.rhs)
                    if (it.kind == Item::Kind::ref && !productive[nt_index[it.nt]]) {
                        nextnt = nt_index[it.nt];
                        break;
                    }
                break;
            }
            const std::size_t seen = static_cast<std::size_t>(std::find(path.begin(), path.end(), nextnt) - path.begin());
            path.push_back(nextnt);
            if (seen + 1 < path.size()) {
                std::string cycle;
                for (std::size_t k = seen; k < path.size(); ++k) {
                    if (!cycle.empty()) cycle += " -> ";
                    cycle += g.nonterminals_[path[k]].name;
                }
                throw ParseError(g.nonterminals_[i].loc,
                                 "non-terminal " + g.nonterminals_[i].name + " is unproductive (cycle: " + cycle + ")");
            }
            cur = nextnt;
        }
    }
    return g;
}

}  // namespace dialsynth

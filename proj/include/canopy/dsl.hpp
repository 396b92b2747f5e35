#pragma once

// Frontend for the coordination language: jdata/jcond/jsync/jasync blocks
// embedded in otherwise-opaque host source. Handler bodies and top-level host
// code are never interpreted, only brace-matched (string- and comment-aware),
// so arbitrary host syntax passes through untouched.

#include <charconv>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "canopy/error.hpp"
#include "canopy/topology.hpp"

namespace canopy::dsl {

struct SourceLoc {
    int line = 0;
    int col = 0;
};

class ParseFailure : public Error {
public:
    ParseFailure(SourceLoc loc, const std::string& msg)
        : Error(Errc::ParseError, std::to_string(loc.line) + ":" + std::to_string(loc.col) +
                                      ": " + msg),
          loc_(loc),
          reason_(msg) {}
    SourceLoc loc() const { return loc_; }
    const std::string& reason() const { return reason_; }

private:
    SourceLoc loc_;
    std::string reason_;
};

enum class ScalarType { Int, Double, String };
enum class DataKind { Logger, Broadcaster };
enum class CallKind { Sync, Async };
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class BoolOp { And, Or };

inline const char* to_string(ScalarType t) {
    switch (t) {
        case ScalarType::Int: return "int";
        case ScalarType::Double: return "double";
        case ScalarType::String: return "string";
    }
    return "?";
}

inline const char* to_string(DataKind k) {
    return k == DataKind::Logger ? "logger" : "broadcaster";
}

inline const char* to_string(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "==";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

struct DataDecl {
    std::string name;
    ScalarType type = ScalarType::Double;
    DataKind kind = DataKind::Logger;
    std::vector<NodeLevel> levels;  // logger placement alternatives, first wins
    SourceLoc loc;

    // bare `logger` defaults to the fog tier
    NodeLevel effective_level() const {
        return levels.empty() ? NodeLevel::Fog : levels.front();
    }
};

struct Expr;
using ExprPtr = std::shared_ptr<Expr>;

struct Expr {
    enum class Kind { Number, StringLit, Var, SysType, SysRank, Compare, Logic };
    Kind kind = Kind::Number;
    double num = 0;
    bool int_literal = false;
    std::string text;  // variable name or string literal value
    CmpOp cmp = CmpOp::Eq;
    BoolOp logic = BoolOp::And;
    ExprPtr lhs, rhs;
    SourceLoc loc;
};

struct CondDecl {
    std::string name;
    ExprPtr expr;
    SourceLoc loc;
};

struct GateExpr;
using GatePtr = std::shared_ptr<GateExpr>;

struct GateExpr {
    enum class Kind { Ref, And, Or };
    Kind kind = Kind::Ref;
    std::string name;
    GatePtr lhs, rhs;
    SourceLoc loc;
};

struct Param {
    ScalarType type = ScalarType::Int;
    std::string name;
};

struct FuncDecl {
    std::string name;
    CallKind call_kind = CallKind::Async;
    std::optional<ScalarType> return_type;
    GatePtr gate;                  // null when ungated
    std::vector<Param> params;
    bool has_param_list = false;   // some listings omit the () entirely
    std::string body;              // inner brace text, verbatim
    SourceLoc loc;
};

struct ProgramDecl {
    std::string app_name;
    std::vector<DataDecl> data;
    std::vector<CondDecl> conds;
    std::vector<FuncDecl> funcs;

    const DataDecl* find_data(const std::string& n) const {
        for (const auto& d : data)
            if (d.name == n) return &d;
        return nullptr;
    }
    const CondDecl* find_cond(const std::string& n) const {
        for (const auto& c : conds)
            if (c.name == n) return &c;
        return nullptr;
    }
    const FuncDecl* find_func(const std::string& n) const {
        for (const auto& f : funcs)
            if (f.name == n) return &f;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// lexer

namespace detail {

struct Token {
    enum class Kind { End, Ident, Number, String, Punct };
    Kind kind = Kind::End;
    std::string text;
    double num = 0;
    bool int_literal = false;
    SourceLoc loc;
    std::size_t offset = 0;  // source offset of the first character
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    const Token& peek() {
        if (!cached_) {
            cached_tok_ = scan();
            cached_ = true;
        }
        return cached_tok_;
    }

    Token next() {
        peek();
        cached_ = false;
        return cached_tok_;
    }

    // Capture the raw text between a balanced brace pair. The next token must
    // be '{'. Returns the inner text and leaves the cursor after the '}'.
    std::string capture_braced() {
        const Token& t = peek();
        if (!(t.kind == Token::Kind::Punct && t.text == "{"))
            throw ParseFailure(t.loc, "expected '{'");
        // re-scan from the raw offset of the cached '{'
        pos_ = t.offset;
        line_ = t.loc.line;
        col_ = t.loc.col;
        cached_ = false;
        ++pos_;
        ++col_;
        std::size_t start = pos_;
        int depth = 1;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '"' || c == '\'') {
                skip_string_raw(c);
                continue;
            }
            if (c == '/' && pos_ + 1 < src_.size() &&
                (src_[pos_ + 1] == '/' || src_[pos_ + 1] == '*')) {
                skip_comment_raw();
                continue;
            }
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) {
                    std::string inner(src_.substr(start, pos_ - start));
                    advance();
                    return inner;
                }
            }
            advance();
        }
        throw ParseFailure({line_, col_}, "unterminated '{' block");
    }

    // Skip host code until one of the given keywords appears at brace depth 0.
    void skip_host_until(const std::set<std::string>& keywords) {
        if (cached_) {
            pos_ = cached_tok_.offset;
            line_ = cached_tok_.loc.line;
            col_ = cached_tok_.loc.col;
            cached_ = false;
        }
        int depth = 0;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '"' || c == '\'') {
                skip_string_raw(c);
                continue;
            }
            if (c == '/' && pos_ + 1 < src_.size() &&
                (src_[pos_ + 1] == '/' || src_[pos_ + 1] == '*')) {
                skip_comment_raw();
                continue;
            }
            if (is_ident_start(c)) {
                std::size_t s = pos_;
                int sl = line_, sc = col_;
                while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
                if (depth == 0 &&
                    keywords.count(std::string(src_.substr(s, pos_ - s)))) {
                    pos_ = s;
                    line_ = sl;
                    col_ = sc;
                    return;
                }
                continue;
            }
            if (c == '{') ++depth;
            if (c == '}' && depth > 0) --depth;
            advance();
        }
    }

private:
    static bool is_ident_start(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    }
    static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_string_raw(char quote) {
        advance();  // opening quote
        while (pos_ < src_.size() && src_[pos_] != quote) {
            if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) advance();
            advance();
        }
        if (pos_ < src_.size()) advance();  // closing quote
    }

    void skip_comment_raw() {
        if (src_[pos_ + 1] == '/') {
            while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        } else {
            advance();
            advance();
            while (pos_ + 1 < src_.size() &&
                   !(src_[pos_] == '*' && src_[pos_ + 1] == '/'))
                advance();
            if (pos_ + 1 < src_.size()) {
                advance();
                advance();
            } else {
                throw ParseFailure({line_, col_}, "unterminated comment");
            }
        }
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '/' && pos_ + 1 < src_.size() &&
                       (src_[pos_ + 1] == '/' || src_[pos_ + 1] == '*')) {
                skip_comment_raw();
            } else {
                break;
            }
        }
    }

    Token scan() {
        skip_space_and_comments();
        Token t;
        t.loc = {line_, col_};
        t.offset = pos_;
        if (pos_ >= src_.size()) {
            t.kind = Token::Kind::End;
            return t;
        }
        char c = src_[pos_];
        if (is_ident_start(c)) {
            std::size_t s = pos_;
            while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
            t.kind = Token::Kind::Ident;
            t.text = std::string(src_.substr(s, pos_ - s));
            return t;
        }
        if (is_digit(c)) {
            std::size_t s = pos_;
            bool dotted = false;
            while (pos_ < src_.size() &&
                   (is_digit(src_[pos_]) || (!dotted && src_[pos_] == '.' &&
                                             pos_ + 1 < src_.size() &&
                                             is_digit(src_[pos_ + 1])))) {
                if (src_[pos_] == '.') dotted = true;
                advance();
            }
            t.kind = Token::Kind::Number;
            t.text = std::string(src_.substr(s, pos_ - s));
            t.num = std::strtod(t.text.c_str(), nullptr);
            t.int_literal = !dotted;
            return t;
        }
        if (c == '"') {
            advance();
            std::string val;
            while (pos_ < src_.size() && src_[pos_] != '"') {
                char ch = src_[pos_];
                if (ch == '\\' && pos_ + 1 < src_.size()) {
                    advance();
                    char esc = src_[pos_];
                    switch (esc) {
                        case 'n': val += '\n'; break;
                        case 't': val += '\t'; break;
                        default: val += esc;
                    }
                } else {
                    val += ch;
                }
                advance();
            }
            if (pos_ >= src_.size())
                throw ParseFailure(t.loc, "unterminated string literal");
            advance();
            t.kind = Token::Kind::String;
            t.text = val;
            return t;
        }
        // punctuation, longest match first
        auto two = pos_ + 1 < src_.size() ? src_.substr(pos_, 2) : std::string_view{};
        for (std::string_view p : {"==", "!=", "<=", ">=", "&&", "||"}) {
            if (two == p) {
                advance();
                advance();
                t.kind = Token::Kind::Punct;
                t.text = std::string(p);
                return t;
            }
        }
        if (std::string_view("{}();:,|.<>-&").find(c) != std::string_view::npos) {
            advance();
            t.kind = Token::Kind::Punct;
            t.text = std::string(1, c);
            return t;
        }
        throw ParseFailure(t.loc, std::string("unexpected character '") + c + "'");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    bool cached_ = false;
    Token cached_tok_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// parser

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    ProgramDecl parse() {
        ProgramDecl prog;
        const std::set<std::string> constructs{"jdata", "jcond", "jsync", "jasync"};
        while (true) {
            // raw-skip any host code first so arbitrary host syntax between
            // constructs never reaches the tokenizer
            lex_.skip_host_until(constructs);
            const Token& t = lex_.peek();
            if (t.kind == Token::Kind::End) break;
            if (t.text == "jdata") {
                parse_jdata(prog);
            } else if (t.text == "jcond") {
                parse_jcond(prog);
            } else {
                parse_func(prog);
            }
        }
        return prog;
    }

private:
    Token expect_punct(const std::string& p) {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Punct || t.text != p)
            throw ParseFailure(t.loc, "expected '" + p + "', got '" + describe(t) + "'");
        return t;
    }

    Token expect_ident() {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Ident)
            throw ParseFailure(t.loc, "expected identifier, got '" + describe(t) + "'");
        return t;
    }

    static std::string describe(const Token& t) {
        return t.kind == Token::Kind::End ? "end of input" : t.text;
    }

    bool peek_punct(const std::string& p) {
        const Token& t = lex_.peek();
        return t.kind == Token::Kind::Punct && t.text == p;
    }

    bool peek_ident(const std::string& s) {
        const Token& t = lex_.peek();
        return t.kind == Token::Kind::Ident && t.text == s;
    }

    static std::optional<ScalarType> scalar_from(const std::string& s) {
        if (s == "int") return ScalarType::Int;
        if (s == "double") return ScalarType::Double;
        if (s == "string") return ScalarType::String;
        return std::nullopt;
    }

    void parse_jdata(ProgramDecl& prog) {
        lex_.next();  // jdata
        expect_punct("{");
        while (!peek_punct("}")) {
            DataDecl d;
            Token ty = expect_ident();
            d.loc = ty.loc;
            auto st = scalar_from(ty.text);
            if (!st)
                throw ParseFailure(ty.loc, "unknown data type '" + ty.text + "'");
            d.type = *st;
            d.name = expect_ident().text;
            Token as = expect_ident();
            if (as.text != "as")
                throw ParseFailure(as.loc, "expected 'as', got '" + as.text + "'");
            Token kind = expect_ident();
            if (kind.text == "logger") {
                d.kind = DataKind::Logger;
                if (peek_punct("(")) {
                    lex_.next();
                    while (true) {
                        Token lv = expect_ident();
                        NodeLevel level;
                        try {
                            level = level_from_string(lv.text);
                        } catch (const Error&) {
                            throw ParseFailure(lv.loc,
                                               "unknown level '" + lv.text + "'");
                        }
                        d.levels.push_back(level);
                        if (peek_punct("|")) {
                            lex_.next();
                            continue;
                        }
                        break;
                    }
                    expect_punct(")");
                }
            } else if (kind.text == "broadcaster") {
                d.kind = DataKind::Broadcaster;
            } else {
                throw ParseFailure(kind.loc, "expected 'logger' or 'broadcaster', got '" +
                                                 kind.text + "'");
            }
            expect_punct(";");
            prog.data.push_back(std::move(d));
        }
        expect_punct("}");
    }

    void parse_jcond(ProgramDecl& prog) {
        lex_.next();  // jcond
        expect_punct("{");
        while (!peek_punct("}")) {
            CondDecl c;
            Token name = expect_ident();
            c.name = name.text;
            c.loc = name.loc;
            expect_punct(":");
            c.expr = parse_or();
            expect_punct(";");
            prog.conds.push_back(std::move(c));
        }
        expect_punct("}");
    }

    ExprPtr parse_or() {
        ExprPtr e = parse_and();
        while (peek_punct("||")) {
            Token op = lex_.next();
            auto r = parse_and();
            auto n = std::make_shared<Expr>();
            n->kind = Expr::Kind::Logic;
            n->logic = BoolOp::Or;
            n->lhs = e;
            n->rhs = r;
            n->loc = op.loc;
            e = n;
        }
        return e;
    }

    ExprPtr parse_and() {
        ExprPtr e = parse_cmp();
        while (peek_punct("&&")) {
            Token op = lex_.next();
            auto r = parse_cmp();
            auto n = std::make_shared<Expr>();
            n->kind = Expr::Kind::Logic;
            n->logic = BoolOp::And;
            n->lhs = e;
            n->rhs = r;
            n->loc = op.loc;
            e = n;
        }
        return e;
    }

    ExprPtr parse_cmp() {
        ExprPtr e = parse_primary();
        const Token& t = lex_.peek();
        if (t.kind == Token::Kind::Punct) {
            CmpOp op;
            bool is_cmp = true;
            if (t.text == "==") op = CmpOp::Eq;
            else if (t.text == "!=") op = CmpOp::Ne;
            else if (t.text == "<") op = CmpOp::Lt;
            else if (t.text == "<=") op = CmpOp::Le;
            else if (t.text == ">") op = CmpOp::Gt;
            else if (t.text == ">=") op = CmpOp::Ge;
            else is_cmp = false;
            if (is_cmp) {
                Token tok = lex_.next();
                auto r = parse_primary();
                auto n = std::make_shared<Expr>();
                n->kind = Expr::Kind::Compare;
                n->cmp = op;
                n->lhs = e;
                n->rhs = r;
                n->loc = tok.loc;
                return n;
            }
        }
        return e;
    }

    ExprPtr parse_primary() {
        Token t = lex_.next();
        auto n = std::make_shared<Expr>();
        n->loc = t.loc;
        if (t.kind == Token::Kind::Number) {
            n->kind = Expr::Kind::Number;
            n->num = t.num;
            n->int_literal = t.int_literal;
            return n;
        }
        if (t.kind == Token::Kind::Punct && t.text == "-") {
            Token v = lex_.next();
            if (v.kind != Token::Kind::Number)
                throw ParseFailure(v.loc, "expected number after '-'");
            n->kind = Expr::Kind::Number;
            n->num = -v.num;
            n->int_literal = v.int_literal;
            return n;
        }
        if (t.kind == Token::Kind::String) {
            n->kind = Expr::Kind::StringLit;
            n->text = t.text;
            return n;
        }
        if (t.kind == Token::Kind::Punct && t.text == "(") {
            auto inner = parse_or();
            expect_punct(")");
            return inner;
        }
        if (t.kind == Token::Kind::Ident) {
            if (t.text == "sys") {
                expect_punct(".");
                Token attr = expect_ident();
                if (attr.text == "type") {
                    n->kind = Expr::Kind::SysType;
                } else if (attr.text == "rank") {
                    n->kind = Expr::Kind::SysRank;
                } else {
                    throw ParseFailure(attr.loc,
                                       "unknown system attribute 'sys." + attr.text + "'");
                }
                return n;
            }
            n->kind = Expr::Kind::Var;
            n->text = t.text;
            return n;
        }
        throw ParseFailure(t.loc, "expected expression, got '" + describe(t) + "'");
    }

    GatePtr parse_gate() {
        expect_punct("{");
        auto g = parse_gate_or();
        expect_punct("}");
        return g;
    }

    GatePtr parse_gate_or() {
        GatePtr g = parse_gate_and();
        while (peek_punct("||")) {
            Token op = lex_.next();
            auto r = parse_gate_and();
            auto n = std::make_shared<GateExpr>();
            n->kind = GateExpr::Kind::Or;
            n->lhs = g;
            n->rhs = r;
            n->loc = op.loc;
            g = n;
        }
        return g;
    }

    GatePtr parse_gate_and() {
        GatePtr g = parse_gate_atom();
        while (peek_punct("&&")) {
            Token op = lex_.next();
            auto r = parse_gate_atom();
            auto n = std::make_shared<GateExpr>();
            n->kind = GateExpr::Kind::And;
            n->lhs = g;
            n->rhs = r;
            n->loc = op.loc;
            g = n;
        }
        return g;
    }

    GatePtr parse_gate_atom() {
        if (peek_punct("(")) {
            lex_.next();
            auto g = parse_gate_or();
            expect_punct(")");
            return g;
        }
        Token t = expect_ident();
        auto n = std::make_shared<GateExpr>();
        n->kind = GateExpr::Kind::Ref;
        n->name = t.text;
        n->loc = t.loc;
        return n;
    }

    // jsync/jasync, with the gate accepted either before or after 'function'
    void parse_func(ProgramDecl& prog) {
        Token kw = lex_.next();
        FuncDecl f;
        f.loc = kw.loc;
        f.call_kind = kw.text == "jsync" ? CallKind::Sync : CallKind::Async;
        if (lex_.peek().kind == Token::Kind::Ident) {
            if (auto st = scalar_from(lex_.peek().text)) {
                // a type name here is the return type unless it is the
                // function name itself (type followed directly by '{' or '(')
                Token save = lex_.peek();
                lex_.next();
                if (peek_punct("{") || peek_punct("(")) {
                    // it was the name after all
                    f.name = save.text;
                    finish_func(prog, std::move(f), true);
                    return;
                }
                f.return_type = *st;
            }
        }
        if (peek_punct("{")) f.gate = parse_gate();
        if (peek_ident("function")) lex_.next();
        if (peek_punct("{")) {
            if (f.gate)
                throw ParseFailure(lex_.peek().loc, "gate given twice");
            f.gate = parse_gate();
        }
        f.name = expect_ident().text;
        finish_func(prog, std::move(f), false);
    }

    void finish_func(ProgramDecl& prog, FuncDecl f, bool named_already) {
        if (!named_already || peek_punct("(")) {
            if (peek_punct("(")) {
                lex_.next();
                f.has_param_list = true;
                while (!peek_punct(")")) {
                    Param p;
                    Token ty = expect_ident();
                    auto st = scalar_from(ty.text);
                    if (!st)
                        throw ParseFailure(ty.loc,
                                           "unknown parameter type '" + ty.text + "'");
                    p.type = *st;
                    p.name = expect_ident().text;
                    f.params.push_back(std::move(p));
                    if (peek_punct(",")) {
                        lex_.next();
                        continue;
                    }
                    break;
                }
                expect_punct(")");
            }
        }
        f.body = lex_.capture_braced();
        prog.funcs.push_back(std::move(f));
    }

    Lexer lex_;
};

}  // namespace detail

inline ProgramDecl parse_program(std::string_view source, const std::string& app_name = "") {
    detail::Parser p(source);
    ProgramDecl prog = p.parse();
    prog.app_name = app_name;
    return prog;
}

// ---------------------------------------------------------------------------
// printing

namespace detail {

inline std::string number_text(double v, bool int_literal) {
    if (int_literal) return std::to_string(static_cast<long long>(v));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void print_expr(std::string& out, const Expr& e, int parent_prec) {
    auto prec = [](const Expr& x) {
        if (x.kind == Expr::Kind::Logic) return x.logic == BoolOp::Or ? 1 : 2;
        if (x.kind == Expr::Kind::Compare) return 3;
        return 4;
    };
    int p = prec(e);
    bool parens = p < parent_prec;
    if (parens) out += '(';
    switch (e.kind) {
        case Expr::Kind::Number:
            out += number_text(e.num, e.int_literal);
            break;
        case Expr::Kind::StringLit:
            out += '"';
            out += e.text;  // escapes were rare enough to keep verbatim
            out += '"';
            break;
        case Expr::Kind::Var:
            out += e.text;
            break;
        case Expr::Kind::SysType:
            out += "sys.type";
            break;
        case Expr::Kind::SysRank:
            out += "sys.rank";
            break;
        case Expr::Kind::Compare:
            print_expr(out, *e.lhs, p);
            out += ' ';
            out += to_string(e.cmp);
            out += ' ';
            print_expr(out, *e.rhs, p + 1);
            break;
        case Expr::Kind::Logic:
            print_expr(out, *e.lhs, p);
            out += e.logic == BoolOp::Or ? " || " : " && ";
            print_expr(out, *e.rhs, p + 1);
            break;
    }
    if (parens) out += ')';
}

inline void print_gate(std::string& out, const GateExpr& g, int parent_prec) {
    int p = g.kind == GateExpr::Kind::Or ? 1 : g.kind == GateExpr::Kind::And ? 2 : 3;
    bool parens = p < parent_prec;
    if (parens) out += '(';
    if (g.kind == GateExpr::Kind::Ref) {
        out += g.name;
    } else {
        print_gate(out, *g.lhs, p);
        out += g.kind == GateExpr::Kind::Or ? "||" : "&&";
        print_gate(out, *g.rhs, p + 1);
    }
    if (parens) out += ')';
}

}  // namespace detail

inline std::string expr_text(const Expr& e) {
    std::string out;
    detail::print_expr(out, e, 0);
    return out;
}

inline std::string gate_text(const GateExpr& g) {
    std::string out;
    detail::print_gate(out, g, 0);
    return out;
}

// Canonical form: jdata, jcond, then functions; gates print before 'function'.
// Bodies are reproduced byte-for-byte, so pretty-print then re-parse gives a
// structurally equal program.
inline std::string pretty_print(const ProgramDecl& prog) {
    std::string out;
    auto blank = [&] {
        if (!out.empty()) out += '\n';
    };
    if (!prog.data.empty()) {
        out += "jdata {\n";
        for (const auto& d : prog.data) {
            out += "    ";
            out += to_string(d.type);
            out += ' ';
            out += d.name;
            out += " as ";
            out += to_string(d.kind);
            if (d.kind == DataKind::Logger && !d.levels.empty()) {
                out += '(';
                for (std::size_t i = 0; i < d.levels.size(); ++i) {
                    if (i) out += '|';
                    out += canopy::to_string(d.levels[i]);
                }
                out += ')';
            }
            out += ";\n";
        }
        out += "}\n";
    }
    if (!prog.conds.empty()) {
        blank();
        out += "jcond {\n";
        for (const auto& c : prog.conds) {
            out += "    " + c.name + ": " + expr_text(*c.expr) + ";\n";
        }
        out += "}\n";
    }
    for (const auto& f : prog.funcs) {
        blank();
        out += f.call_kind == CallKind::Sync ? "jsync " : "jasync ";
        if (f.return_type) {
            out += to_string(*f.return_type);
            out += ' ';
        }
        if (f.gate) {
            out += '{';
            out += gate_text(*f.gate);
            out += "} ";
        }
        out += "function ";
        out += f.name;
        if (f.has_param_list) {
            out += '(';
            for (std::size_t i = 0; i < f.params.size(); ++i) {
                if (i) out += ", ";
                out += to_string(f.params[i].type);
                out += ' ';
                out += f.params[i].name;
            }
            out += ')';
        }
        out += " {";
        out += f.body;
        out += "}\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// structural equality

inline bool equal(const ExprPtr& a, const ExprPtr& b) {
    if (!a || !b) return !a && !b;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case Expr::Kind::Number:
            return a->num == b->num && a->int_literal == b->int_literal;
        case Expr::Kind::StringLit:
        case Expr::Kind::Var:
            return a->text == b->text;
        case Expr::Kind::SysType:
        case Expr::Kind::SysRank:
            return true;
        case Expr::Kind::Compare:
            return a->cmp == b->cmp && equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
        case Expr::Kind::Logic:
            return a->logic == b->logic && equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
    }
    return false;
}

inline bool equal(const GatePtr& a, const GatePtr& b) {
    if (!a || !b) return !a && !b;
    if (a->kind != b->kind) return false;
    if (a->kind == GateExpr::Kind::Ref) return a->name == b->name;
    return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
}

inline bool structurally_equal(const ProgramDecl& a, const ProgramDecl& b) {
    if (a.data.size() != b.data.size() || a.conds.size() != b.conds.size() ||
        a.funcs.size() != b.funcs.size())
        return false;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const auto &x = a.data[i], &y = b.data[i];
        if (x.name != y.name || x.type != y.type || x.kind != y.kind ||
            x.levels != y.levels)
            return false;
    }
    for (std::size_t i = 0; i < a.conds.size(); ++i) {
        if (a.conds[i].name != b.conds[i].name || !equal(a.conds[i].expr, b.conds[i].expr))
            return false;
    }
    for (std::size_t i = 0; i < a.funcs.size(); ++i) {
        const auto &x = a.funcs[i], &y = b.funcs[i];
        if (x.name != y.name || x.call_kind != y.call_kind ||
            x.return_type != y.return_type || !equal(x.gate, y.gate) ||
            x.params.size() != y.params.size() ||
            x.has_param_list != y.has_param_list || x.body != y.body)
            return false;
        for (std::size_t j = 0; j < x.params.size(); ++j)
            if (x.params[j].type != y.params[j].type || x.params[j].name != y.params[j].name)
                return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// validation

struct Diagnostic {
    SourceLoc loc;
    std::string code;
    std::string message;
};

namespace detail {

// static type of an expression operand, when derivable
enum class OperandType { Numeric, Text, Unknown };

inline OperandType operand_type(const Expr& e, const ProgramDecl& prog) {
    switch (e.kind) {
        case Expr::Kind::Number: return OperandType::Numeric;
        case Expr::Kind::StringLit: return OperandType::Text;
        case Expr::Kind::SysType: return OperandType::Text;
        case Expr::Kind::SysRank: return OperandType::Numeric;
        case Expr::Kind::Var: {
            const DataDecl* d = prog.find_data(e.text);
            if (!d) return OperandType::Unknown;
            return d->type == ScalarType::String ? OperandType::Text : OperandType::Numeric;
        }
        default: return OperandType::Unknown;
    }
}

inline void check_expr(const Expr& e, const ProgramDecl& prog,
                       std::vector<Diagnostic>& out) {
    switch (e.kind) {
        case Expr::Kind::Var:
            if (!prog.find_data(e.text))
                out.push_back({e.loc, "unresolved-var",
                               "condition references undeclared variable '" + e.text + "'"});
            break;
        case Expr::Kind::Compare: {
            check_expr(*e.lhs, prog, out);
            check_expr(*e.rhs, prog, out);
            OperandType l = operand_type(*e.lhs, prog);
            OperandType r = operand_type(*e.rhs, prog);
            if (l != OperandType::Unknown && r != OperandType::Unknown && l != r)
                out.push_back({e.loc, "type-mismatch",
                               "comparison mixes text and numeric operands"});
            break;
        }
        case Expr::Kind::Logic:
            if (e.lhs->kind != Expr::Kind::Compare && e.lhs->kind != Expr::Kind::Logic)
                out.push_back({e.lhs->loc, "non-boolean-operand",
                               "logical operand is not a comparison"});
            if (e.rhs->kind != Expr::Kind::Compare && e.rhs->kind != Expr::Kind::Logic)
                out.push_back({e.rhs->loc, "non-boolean-operand",
                               "logical operand is not a comparison"});
            check_expr(*e.lhs, prog, out);
            check_expr(*e.rhs, prog, out);
            break;
        default:
            break;
    }
}

inline void check_gate(const GateExpr& g, const ProgramDecl& prog,
                       std::vector<Diagnostic>& out) {
    if (g.kind == GateExpr::Kind::Ref) {
        if (!prog.find_cond(g.name))
            out.push_back({g.loc, "unresolved-cond",
                           "gate references undeclared condition '" + g.name + "'"});
        return;
    }
    check_gate(*g.lhs, prog, out);
    check_gate(*g.rhs, prog, out);
}

}  // namespace detail

// Name resolution is program-wide, so declaration order never matters.
inline std::vector<Diagnostic> validate_program(const ProgramDecl& prog) {
    std::vector<Diagnostic> out;
    // variables, conditions and functions are referenced from disjoint
    // positions, so names only clash within their own category (the corpus
    // even has a function and a condition sharing a name)
    auto claim_all = [&](auto&& decls, const char* what) {
        std::map<std::string, SourceLoc> seen;
        for (const auto& d : decls) {
            auto [it, fresh] = seen.emplace(d.name, d.loc);
            if (!fresh)
                out.push_back({d.loc, "duplicate-name",
                               std::string(what) + " '" + d.name +
                                   "' conflicts with an earlier declaration at line " +
                                   std::to_string(it->second.line)});
        }
    };
    claim_all(prog.data, "variable");
    claim_all(prog.conds, "condition");
    claim_all(prog.funcs, "function");
    for (const auto& c : prog.conds) detail::check_expr(*c.expr, prog, out);
    for (const auto& f : prog.funcs) {
        if (f.gate) detail::check_gate(*f.gate, prog, out);
        if (f.call_kind == CallKind::Sync && !f.return_type)
            out.push_back({f.loc, "missing-return-type",
                           "blocking function '" + f.name + "' declares no return type"});
        if (f.call_kind == CallKind::Async && f.return_type)
            out.push_back({f.loc, "unexpected-return-type",
                           "non-blocking function '" + f.name + "' cannot return a value"});
        std::set<std::string> pnames;
        for (const auto& p : f.params)
            if (!pnames.insert(p.name).second)
                out.push_back({f.loc, "duplicate-name",
                               "parameter '" + p.name + "' repeats in '" + f.name + "'"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation

using Value = std::variant<std::int64_t, double, std::string>;

inline std::string value_text(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v))
        return std::to_string(std::get<std::int64_t>(v));
    if (std::holds_alternative<double>(v))
        return detail::number_text(std::get<double>(v), false);
    return std::get<std::string>(v);
}

inline double value_num(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v))
        return static_cast<double>(std::get<std::int64_t>(v));
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    throw Error(Errc::BadConfig, "text value used as a number");
}

// Node-local view a condition is evaluated against. A key that is present
// but empty means "declared, no value observed yet", which blocks rather
// than failing.
struct EvalContext {
    std::string sys_type;  // "device", "fog", "cloud"
    int sys_rank = 0;
    std::map<std::string, std::optional<Value>> vars;
};

struct EvalResult {
    enum class State { True, False, Blocked };
    State state = State::False;
    std::string missing;  // variable that blocked evaluation

    bool ready() const { return state != State::Blocked; }
    bool truthy() const { return state == State::True; }
};

namespace detail {

struct Operand {
    enum class Kind { Num, Text, Missing } kind = Kind::Num;
    double num = 0;
    std::string text;
    bool is_sys_type = false;
    std::string missing_name;
};

inline Operand eval_operand(const Expr& e, const EvalContext& ctx) {
    Operand o;
    switch (e.kind) {
        case Expr::Kind::Number:
            o.num = e.num;
            return o;
        case Expr::Kind::StringLit:
            o.kind = Operand::Kind::Text;
            o.text = e.text;
            return o;
        case Expr::Kind::SysType:
            o.kind = Operand::Kind::Text;
            o.text = ctx.sys_type;
            o.is_sys_type = true;
            return o;
        case Expr::Kind::SysRank:
            o.num = ctx.sys_rank;
            return o;
        case Expr::Kind::Var: {
            auto it = ctx.vars.find(e.text);
            if (it == ctx.vars.end())
                throw Error(Errc::UnknownVariable,
                            "condition references undeclared variable '" + e.text + "'");
            if (!it->second) {
                o.kind = Operand::Kind::Missing;
                o.missing_name = e.text;
                return o;
            }
            const Value& v = *it->second;
            if (std::holds_alternative<std::string>(v)) {
                o.kind = Operand::Kind::Text;
                o.text = std::get<std::string>(v);
            } else {
                o.num = value_num(v);
            }
            return o;
        }
        default:
            throw Error(Errc::BadConfig, "nested expression used as operand");
    }
}

// "dev" is accepted as shorthand for "device" wherever sys.type is compared
inline std::string normalize_type_text(const std::string& s) {
    return s == "dev" ? "device" : s;
}

inline EvalResult eval_tri(const Expr& e, const EvalContext& ctx) {
    using State = EvalResult::State;
    if (e.kind == Expr::Kind::Logic) {
        EvalResult l = eval_tri(*e.lhs, ctx);
        EvalResult r = eval_tri(*e.rhs, ctx);
        if (e.logic == BoolOp::And) {
            if (l.state == State::False || r.state == State::False)
                return {State::False, {}};
            if (l.state == State::Blocked) return l;
            if (r.state == State::Blocked) return r;
            return {State::True, {}};
        }
        if (l.state == State::True || r.state == State::True) return {State::True, {}};
        if (l.state == State::Blocked) return l;
        if (r.state == State::Blocked) return r;
        return {State::False, {}};
    }
    if (e.kind != Expr::Kind::Compare)
        throw Error(Errc::BadConfig, "condition is not a comparison");
    Operand l = eval_operand(*e.lhs, ctx);
    Operand r = eval_operand(*e.rhs, ctx);
    if (l.kind == Operand::Kind::Missing) return {State::Blocked, l.missing_name};
    if (r.kind == Operand::Kind::Missing) return {State::Blocked, r.missing_name};
    int c;
    if (l.kind == Operand::Kind::Text && r.kind == Operand::Kind::Text) {
        std::string a = l.text, b = r.text;
        if (l.is_sys_type || r.is_sys_type) {
            a = normalize_type_text(a);
            b = normalize_type_text(b);
        }
        c = a.compare(b) < 0 ? -1 : a.compare(b) > 0 ? 1 : 0;
    } else if (l.kind == Operand::Kind::Num && r.kind == Operand::Kind::Num) {
        c = l.num < r.num ? -1 : l.num > r.num ? 1 : 0;
    } else {
        throw Error(Errc::BadConfig, "comparison mixes text and numeric operands");
    }
    bool v = false;
    switch (e.cmp) {
        case CmpOp::Eq: v = c == 0; break;
        case CmpOp::Ne: v = c != 0; break;
        case CmpOp::Lt: v = c < 0; break;
        case CmpOp::Le: v = c <= 0; break;
        case CmpOp::Gt: v = c > 0; break;
        case CmpOp::Ge: v = c >= 0; break;
    }
    return {v ? State::True : State::False, {}};
}

}  // namespace detail

inline EvalResult evaluate_condition(const Expr& e, const EvalContext& ctx) {
    return detail::eval_tri(e, ctx);
}

// Gate over named conditions, same three-valued logic.
inline EvalResult evaluate_gate(const GateExpr& g, const ProgramDecl& prog,
                                const EvalContext& ctx) {
    using State = EvalResult::State;
    if (g.kind == GateExpr::Kind::Ref) {
        const CondDecl* c = prog.find_cond(g.name);
        if (!c)
            throw Error(Errc::UnknownVariable, "gate references undeclared condition '" +
                                                   g.name + "'");
        return evaluate_condition(*c->expr, ctx);
    }
    EvalResult l = evaluate_gate(*g.lhs, prog, ctx);
    EvalResult r = evaluate_gate(*g.rhs, prog, ctx);
    if (g.kind == GateExpr::Kind::And) {
        if (l.state == State::False || r.state == State::False) return {State::False, {}};
        if (l.state == State::Blocked) return l;
        if (r.state == State::Blocked) return r;
        return {State::True, {}};
    }
    if (l.state == State::True || r.state == State::True) return {State::True, {}};
    if (l.state == State::Blocked) return l;
    if (r.state == State::Blocked) return r;
    return {State::False, {}};
}

// ---------------------------------------------------------------------------
// JSON view of the AST (CLI output)

inline nlohmann::json to_json(const ProgramDecl& prog) {
    nlohmann::json j;
    j["app"] = prog.app_name;
    j["data"] = nlohmann::json::array();
    for (const auto& d : prog.data) {
        nlohmann::json jd{{"name", d.name},
                          {"type", to_string(d.type)},
                          {"kind", to_string(d.kind)}};
        jd["levels"] = nlohmann::json::array();
        for (auto l : d.levels) jd["levels"].push_back(canopy::to_string(l));
        jd["effective_level"] = canopy::to_string(d.effective_level());
        j["data"].push_back(std::move(jd));
    }
    j["conds"] = nlohmann::json::array();
    for (const auto& c : prog.conds)
        j["conds"].push_back({{"name", c.name}, {"expr", expr_text(*c.expr)}});
    j["funcs"] = nlohmann::json::array();
    for (const auto& f : prog.funcs) {
        nlohmann::json jf{{"name", f.name},
                          {"call", f.call_kind == CallKind::Sync ? "sync" : "async"}};
        if (f.return_type) jf["return"] = to_string(*f.return_type);
        if (f.gate) jf["gate"] = gate_text(*f.gate);
        jf["params"] = nlohmann::json::array();
        for (const auto& p : f.params)
            jf["params"].push_back({{"type", to_string(p.type)}, {"name", p.name}});
        jf["body"] = f.body;
        j["funcs"].push_back(std::move(jf));
    }
    return j;
}

}  // namespace canopy::dsl

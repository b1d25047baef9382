#include "iflab/parser.hpp"

#include <cctype>
#include <cstdlib>
#include <vector>

#include "iflab/error.hpp"

namespace iflab {

namespace {

struct Token {
  enum Type { Number, Ident, Punct, End } type = End;
  std::string text;
  double num = 0.0;
  bool is_int = false;
  int line = 1, col = 1;
};

struct Lexer {
  const std::string& src;
  std::size_t pos = 0;
  int line = 1, col = 1;

  explicit Lexer(const std::string& s) : src(s) {}

  [[noreturn]] void err(int l, int c, const std::string& msg) const {
    fail(Errc::SyntaxError,
         msg + " at line " + std::to_string(l) + ", column " + std::to_string(c));
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos < src.size(); ++i, ++pos) {
      if (src[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  }

  Token next() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) advance(1);
    Token t;
    t.line = line;
    t.col = col;
    if (pos >= src.size()) return t;
    char c = src[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[pos + 1])))) {
      const char* begin = src.c_str() + pos;
      char* end = nullptr;
      t.num = std::strtod(begin, &end);
      std::size_t len = static_cast<std::size_t>(end - begin);
      t.type = Token::Number;
      t.text = src.substr(pos, len);
      t.is_int = t.text.find_first_of(".eE") == std::string::npos;
      advance(len);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
        advance(1);
      t.type = Token::Ident;
      t.text = src.substr(start, pos - start);
      return t;
    }
    if (std::string("+-*/()[]{}=,|").find(c) != std::string::npos) {
      t.type = Token::Punct;
      t.text = std::string(1, c);
      advance(1);
      return t;
    }
    err(line, col, std::string("unexpected character '") + c + "'");
  }
};

struct Parser {
  Lexer lex;
  Token cur;
  std::vector<std::string> bound;  // stack of bound summation variables

  explicit Parser(const std::string& s) : lex(s) { cur = lex.next(); }

  [[noreturn]] void err(const std::string& msg) const { lex.err(cur.line, cur.col, msg); }

  void bump() { cur = lex.next(); }

  bool at_punct(const char* p) const { return cur.type == Token::Punct && cur.text == p; }

  void expect_punct(const char* p) {
    if (!at_punct(p)) err(std::string("expected '") + p + "'");
    bump();
  }

  bool is_bound(const std::string& name) const {
    for (auto& b : bound)
      if (b == name) return true;
    return false;
  }

  std::vector<Assign> parse_assigns(const char* closer) {
    std::vector<Assign> out;
    while (true) {
      if (cur.type != Token::Ident) err("expected a variable name");
      Assign a;
      a.var = cur.text;
      Token var_tok = cur;
      bump();
      expect_punct("=");
      if (cur.type == Token::Number) {
        if (!cur.is_int) err("level must be an integer");
        a.arg.kind = ArgKind::Level;
        a.arg.level = static_cast<int>(cur.num);
        bump();
      } else if (cur.type == Token::Ident) {
        if (!is_bound(cur.text))
          fail(Errc::UnboundVariable,
               "'" + cur.text + "' is not bound by any enclosing sum (line " +
                   std::to_string(cur.line) + ", column " + std::to_string(cur.col) + ")");
        a.arg.kind = ArgKind::Bound;
        a.arg.name = cur.text;
        bump();
      } else {
        err("expected a level or a bound variable");
      }
      for (auto& prev : out)
        if (prev.var == a.var)
          lex.err(var_tok.line, var_tok.col, "variable '" + a.var + "' assigned twice");
      out.push_back(std::move(a));
      if (at_punct(",")) {
        bump();
        continue;
      }
      if (at_punct(closer)) return out;
      err(std::string("expected ',' or '") + closer + "'");
    }
  }

  ExprPtr parse_factor(bool data_ctx) {
    if (cur.type == Token::Number) {
      double v = cur.num;
      bump();
      return cnum(v);
    }
    if (at_punct("(")) {
      bump();
      ExprPtr e = parse_expr(data_ctx);
      expect_punct(")");
      return e;
    }
    if (cur.type != Token::Ident) err("expected a factor");
    std::string id = cur.text;
    Token id_tok = cur;

    if (id == "p" && !data_ctx) {
      bump();
      if (!at_punct("(")) err("expected '(' after p");
      bump();
      auto as = parse_assigns(")");
      expect_punct(")");
      return mass(std::move(as));
    }
    if (id == "E" && !data_ctx) {
      bump();
      if (!at_punct("[")) err("expected '[' after E");
      bump();
      ExprPtr g = parse_expr(true);
      std::vector<Assign> as;
      if (at_punct("|")) {
        bump();
        as = parse_assigns("]");
      }
      expect_punct("]");
      return cond_exp(std::move(g), std::move(as));
    }
    if (id.rfind("sum_", 0) == 0 && !data_ctx) {
      std::string var = id.substr(4);
      if (var.empty()) err("sum_ needs a variable name");
      if (is_bound(var))
        fail(Errc::RedeclaredBoundVariable,
             "'" + var + "' is already bound (line " + std::to_string(id_tok.line) +
                 ", column " + std::to_string(id_tok.col) + ")");
      bump();
      expect_punct("{");
      bound.push_back(var);
      ExprPtr body = parse_expr(false);
      bound.pop_back();
      expect_punct("}");
      return sum_over(var, std::move(body));
    }
    if (id == "log") {
      bump();
      if (!at_punct("(")) err("expected '(' after log");
      bump();
      ExprPtr e = parse_expr(data_ctx);
      expect_punct(")");
      return apply(Fn::Log, std::move(e));
    }
    // bare identifier
    bump();
    if (data_ctx) return dref(id);
    if (is_bound(id)) return bref(id);
    fail(Errc::UnboundVariable,
         "'" + id + "' is not bound by any enclosing sum (line " +
             std::to_string(id_tok.line) + ", column " + std::to_string(id_tok.col) + ")");
  }

  ExprPtr parse_term(bool data_ctx) {
    ExprPtr e = parse_factor(data_ctx);
    while (at_punct("*") || at_punct("/")) {
      bool is_mul = cur.text == "*";
      bump();
      ExprPtr rhs = parse_factor(data_ctx);
      e = is_mul ? mul(std::move(e), std::move(rhs)) : div_(std::move(e), std::move(rhs));
    }
    return e;
  }

  ExprPtr parse_expr(bool data_ctx) {
    ExprPtr e = parse_term(data_ctx);
    while (at_punct("+") || at_punct("-")) {
      bool is_add = cur.text == "+";
      bump();
      ExprPtr rhs = parse_term(data_ctx);
      e = is_add ? add(std::move(e), std::move(rhs)) : sub(std::move(e), std::move(rhs));
    }
    return e;
  }
};

}  // namespace

FunctionalExpr parse_functional(const std::string& text) {
  Parser p(text);
  if (p.cur.type == Token::End) p.err("empty input");
  ExprPtr root = p.parse_expr(false);
  if (p.cur.type != Token::End) p.err("trailing input");
  return FunctionalExpr{std::move(root)};
}

}  // namespace iflab

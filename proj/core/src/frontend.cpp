#include "proxyq/frontend.hpp"

#include <algorithm>
#include <cctype>

namespace proxyq {

using json = nlohmann::json;

std::string op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::IF: return "IF";
    case OpKind::RANK: return "RANK";
    case OpKind::CLASSIFY: return "CLASSIFY";
  }
  return "?";
}

std::vector<std::string> LogicalPlan::projection() const {
  std::vector<std::string> cols;
  for (const SelectItem& it : select_items)
    if (!it.is_op) cols.push_back(it.column);
  return cols;
}

namespace {

bool values_equal(const Value& a, const Value& b) { return a == b; }

bool preds_equal(const std::vector<RelPredicate>& a,
                 const std::vector<RelPredicate>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].column != b[i].column || a[i].cmp != b[i].cmp ||
        !values_equal(a[i].literal, b[i].literal))
      return false;
  return true;
}

}  // namespace

bool plans_equal(const LogicalPlan& a, const LogicalPlan& b) {
  return a.source == b.source && a.star == b.star &&
         a.select_items == b.select_items &&
         preds_equal(a.relational_predicates, b.relational_predicates) &&
         a.semantic_ops == b.semantic_ops && a.limit == b.limit;
}

namespace {

enum class Tok {
  Ident,
  Number,
  String,
  Symbol,  // ( ) , . * and comparators
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  bool is_real = false;  // Number only
  int line = 1;
  int col = 1;
};

struct Lexer {
  const std::string& src;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Lexer(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg, int l, int c) {
    throw ParseError(msg, l, c);
  }

  char peek() const { return pos < src.size() ? src[pos] : '\0'; }

  char advance() {
    char c = src[pos++];
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(peek())))
      advance();
  }

  Token next() {
    skip_ws();
    Token t;
    t.line = line;
    t.col = col;
    if (pos >= src.size()) return t;

    char c = peek();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(peek())) ||
              peek() == '_'))
        t.text += advance();
      t.kind = Tok::Ident;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      bool dot = false, exp = false;
      while (pos < src.size()) {
        char d = peek();
        if (std::isdigit(static_cast<unsigned char>(d))) {
          t.text += advance();
        } else if (d == '.' && !dot && !exp) {
          dot = true;
          t.text += advance();
        } else if ((d == 'e' || d == 'E') && !exp) {
          exp = true;
          t.text += advance();
          if (peek() == '+' || peek() == '-') t.text += advance();
        } else {
          break;
        }
      }
      t.kind = Tok::Number;
      t.is_real = dot || exp;
      return t;
    }
    if (c == '\'' || c == '"') {
      char quote = advance();
      while (true) {
        if (pos >= src.size())
          fail("unterminated string", t.line, t.col);
        char d = advance();
        if (d == quote) break;
        if (d == '\\') {
          if (pos >= src.size())
            fail("unterminated string", t.line, t.col);
          char e = advance();
          switch (e) {
            case 'n': t.text += '\n'; break;
            case 't': t.text += '\t'; break;
            case 'r': t.text += '\r'; break;
            case '\\': t.text += '\\'; break;
            case '\'': t.text += '\''; break;
            case '"': t.text += '"'; break;
            default:
              fail(std::string("unknown escape \\") + e, line, col - 2);
          }
        } else {
          t.text += d;
        }
      }
      t.kind = Tok::String;
      return t;
    }
    // Comparators and punctuation.
    static const char* two[] = {"<=", ">=", "!=", "<>", "=="};
    for (const char* s : two) {
      if (src.compare(pos, 2, s) == 0) {
        t.text = s;
        advance();
        advance();
        t.kind = Tok::Symbol;
        return t;
      }
    }
    if (std::string("()<>=,.*-").find(c) != std::string::npos) {
      t.text = advance();
      t.kind = Tok::Symbol;
      return t;
    }
    fail(std::string("unexpected character '") + c + "'", t.line, t.col);
  }
};

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

struct Parser {
  std::vector<Token> toks;
  size_t i = 0;

  explicit Parser(const std::string& sql) {
    Lexer lex(sql);
    while (true) {
      Token t = lex.next();
      bool end = t.kind == Tok::End;
      toks.push_back(std::move(t));
      if (end) break;
    }
  }

  const Token& cur() const { return toks[i]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, cur().line, cur().col);
  }

  bool at_keyword(const char* kw) const {
    return cur().kind == Tok::Ident && upper(cur().text) == kw;
  }

  void expect_keyword(const char* kw) {
    if (!at_keyword(kw)) fail(std::string("expected ") + kw);
    ++i;
  }

  bool eat_symbol(const char* s) {
    if (cur().kind == Tok::Symbol && cur().text == s) {
      ++i;
      return true;
    }
    return false;
  }

  void expect_symbol(const char* s) {
    if (!eat_symbol(s)) fail(std::string("expected '") + s + "'");
  }

  std::string expect_ident(const char* what) {
    if (cur().kind != Tok::Ident) fail(std::string("expected ") + what);
    return toks[i++].text;
  }

  // Function-call head: IDENT ('.' IDENT)* '('  — returns the dotted
  // name uppercased, or nullopt when the lookahead is not a call.
  std::optional<std::string> try_call_head() {
    size_t save = i;
    if (cur().kind != Tok::Ident) return std::nullopt;
    std::string name = toks[i++].text;
    while (cur().kind == Tok::Symbol && cur().text == ".") {
      ++i;
      if (cur().kind != Tok::Ident) {
        i = save;
        return std::nullopt;
      }
      name += ".";
      name += toks[i++].text;
    }
    if (cur().kind == Tok::Symbol && cur().text == "(") {
      ++i;
      return upper(name);
    }
    i = save;
    return std::nullopt;
  }

  std::string expect_string(const char* what) {
    if (cur().kind != Tok::String) fail(std::string("expected ") + what);
    return toks[i++].text;
  }

  Value parse_literal() {
    bool neg = false;
    if (cur().kind == Tok::Symbol && cur().text == "-") {
      neg = true;
      ++i;
    }
    if (cur().kind == Tok::Number) {
      Token t = toks[i++];
      if (t.is_real) {
        double d = std::stod(t.text);
        return neg ? -d : d;
      }
      int64_t v = std::stoll(t.text);
      return neg ? -v : v;
    }
    if (neg) fail("expected number after '-'");
    if (cur().kind == Tok::String) return toks[i++].text;
    if (at_keyword("TRUE")) {
      ++i;
      return true;
    }
    if (at_keyword("FALSE")) {
      ++i;
      return false;
    }
    fail("expected literal");
  }

  SemanticOp parse_ai_args(OpKind kind, const Token& at) {
    SemanticOp op;
    op.kind = kind;
    op.prompt = expect_string("prompt string");
    std::string trimmed = op.prompt;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\n\r"));
    if (trimmed.empty())
      throw ParseError("empty prompt in AI." + op_kind_name(kind), at.line,
                       at.col);
    expect_symbol(",");
    op.column = expect_ident("column name");
    if (kind == OpKind::CLASSIFY) {
      std::vector<std::string> cats;
      while (eat_symbol(",")) cats.push_back(expect_string("category string"));
      if (!cats.empty()) op.params["categories"] = cats;
    }
    if (!eat_symbol(")")) {
      if (cur().kind == Tok::Symbol && cur().text == ",")
        throw ParseError("AI." + op_kind_name(kind) + " takes 2 arguments",
                         cur().line, cur().col);
      fail("expected ')'");
    }
    return op;
  }

  OpKind ai_kind(const std::string& name, const Token& at) {
    if (name == "AI.IF") return OpKind::IF;
    if (name == "AI.RANK") return OpKind::RANK;
    if (name == "AI.CLASSIFY") return OpKind::CLASSIFY;
    throw ParseError("unknown function " + name, at.line, at.col);
  }

  LogicalPlan parse() {
    LogicalPlan plan;
    expect_keyword("SELECT");
    if (eat_symbol("*")) {
      plan.star = true;
    } else {
      while (true) {
        Token at = cur();
        if (auto name = try_call_head()) {
          OpKind kind = ai_kind(*name, at);
          if (kind == OpKind::IF)
            throw ParseError(
                "AI.IF belongs in WHERE, not the select list", at.line,
                at.col);
          SemanticOp op = parse_ai_args(kind, at);
          plan.select_items.push_back(
              SelectItem{true, "", plan.semantic_ops.size()});
          plan.semantic_ops.push_back(std::move(op));
        } else {
          plan.select_items.push_back(
              SelectItem{false, expect_ident("column name"), 0});
        }
        if (!eat_symbol(",")) break;
      }
    }
    expect_keyword("FROM");
    plan.source = expect_ident("table name");

    if (at_keyword("WHERE")) {
      ++i;
      while (true) {
        Token at = cur();
        if (auto name = try_call_head()) {
          OpKind kind = ai_kind(*name, at);
          if (kind != OpKind::IF)
            throw ParseError("AI." + op_kind_name(kind) +
                                 " belongs in the select list, not WHERE",
                             at.line, at.col);
          SemanticOp op = parse_ai_args(kind, at);
          plan.semantic_ops.push_back(std::move(op));
        } else {
          RelPredicate p;
          p.column = expect_ident("column name");
          if (cur().kind != Tok::Symbol) fail("expected comparator");
          try {
            p.cmp = parse_cmp(cur().text);
          } catch (const DataError&) {
            fail("expected comparator");
          }
          ++i;
          p.literal = parse_literal();
          plan.relational_predicates.push_back(std::move(p));
        }
        if (!at_keyword("AND")) break;
        ++i;
      }
    }

    if (at_keyword("LIMIT")) {
      Token at = cur();
      ++i;
      if (cur().kind != Tok::Number || cur().is_real)
        fail("expected integer after LIMIT");
      int64_t v = std::stoll(toks[i++].text);
      if (v <= 0)
        throw ParseError("LIMIT must be positive", at.line, at.col);
      plan.limit = v;
    }

    if (cur().kind != Tok::End) fail("unexpected trailing input");

    for (SemanticOp& op : plan.semantic_ops)
      if (op.kind == OpKind::RANK) op.params["top_k"] = plan.limit.value_or(10);
    return plan;
  }
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::string literal_text(const Value& v) {
  if (std::holds_alternative<int64_t>(v))
    return std::to_string(std::get<int64_t>(v));
  if (std::holds_alternative<double>(v)) return json(std::get<double>(v)).dump();
  if (std::holds_alternative<bool>(v))
    return std::get<bool>(v) ? "TRUE" : "FALSE";
  if (std::holds_alternative<std::string>(v))
    return quote(std::get<std::string>(v));
  return "NULL";
}

std::string op_text(const SemanticOp& op) {
  std::string out = "AI." + op_kind_name(op.kind) + "(" + quote(op.prompt) +
                    ", " + op.column;
  if (op.kind == OpKind::CLASSIFY && op.params.contains("categories"))
    for (const auto& c : op.params.at("categories"))
      out += ", " + quote(c.get<std::string>());
  out += ")";
  return out;
}

}  // namespace

LogicalPlan parse_query(const std::string& sql_text) {
  return Parser(sql_text).parse();
}

std::string pretty_print(const LogicalPlan& plan) {
  std::string out = "SELECT ";
  if (plan.star) {
    out += "*";
  } else {
    for (size_t k = 0; k < plan.select_items.size(); ++k) {
      if (k) out += ", ";
      const SelectItem& it = plan.select_items[k];
      out += it.is_op ? op_text(plan.semantic_ops[it.op_index]) : it.column;
    }
  }
  out += " FROM " + plan.source;

  std::vector<std::string> where;
  for (const RelPredicate& p : plan.relational_predicates)
    where.push_back(p.column + " " + cmp_name(p.cmp) + " " +
                    literal_text(p.literal));
  for (const SemanticOp& op : plan.semantic_ops)
    if (op.kind == OpKind::IF) where.push_back(op_text(op));
  if (!where.empty()) {
    out += " WHERE ";
    for (size_t k = 0; k < where.size(); ++k) {
      if (k) out += " AND ";
      out += where[k];
    }
  }
  if (plan.limit) out += " LIMIT " + std::to_string(*plan.limit);
  return out;
}

TableSchema TableSchema::of(const Table& t) {
  TableSchema s;
  for (const std::string& n : t.column_names())
    s.columns.emplace_back(n, t.column_type(n));
  return s;
}

const ColType* TableSchema::find(const std::string& name) const {
  for (const auto& [n, t] : columns)
    if (n == name) return &t;
  return nullptr;
}

namespace {

bool literal_compatible(ColType t, const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return false;
  switch (t) {
    case ColType::Int:
    case ColType::Real:
      return std::holds_alternative<int64_t>(v) ||
             std::holds_alternative<double>(v);
    case ColType::Text:
      return std::holds_alternative<std::string>(v);
    case ColType::Bool:
      return std::holds_alternative<bool>(v);
  }
  return false;
}

}  // namespace

LogicalPlan bind_plan(const LogicalPlan& plan, const TableSchema& schema) {
  LogicalPlan bound = plan;
  for (const SelectItem& it : plan.select_items) {
    if (it.is_op) continue;
    if (!schema.find(it.column))
      throw BindError("unknown column: " + it.column);
  }
  for (const RelPredicate& p : plan.relational_predicates) {
    const ColType* t = schema.find(p.column);
    if (!t) throw BindError("unknown column: " + p.column);
    if (!literal_compatible(*t, p.literal))
      throw BindError("type mismatch: column " + p.column + " is " +
                      col_type_name(*t));
  }
  for (const SemanticOp& op : plan.semantic_ops) {
    const ColType* t = schema.find(op.column);
    if (!t) throw BindError("unknown column: " + op.column);
    if (*t != ColType::Text)
      throw BindError("semantic operator requires text column, but " +
                      op.column + " is " + col_type_name(*t));
  }
  bound.bound = true;
  return bound;
}

namespace {

json value_to_json(const Value& v) {
  if (std::holds_alternative<int64_t>(v)) return std::get<int64_t>(v);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  return nullptr;
}

}  // namespace

nlohmann::json plan_to_json(const LogicalPlan& plan) {
  json j;
  j["source"] = plan.source;
  j["star"] = plan.star;
  j["projection"] = plan.projection();
  json preds = json::array();
  for (const RelPredicate& p : plan.relational_predicates)
    preds.push_back({{"column", p.column},
                     {"cmp", cmp_name(p.cmp)},
                     {"literal", value_to_json(p.literal)}});
  j["relational_predicates"] = std::move(preds);
  json ops = json::array();
  for (const SemanticOp& op : plan.semantic_ops)
    ops.push_back({{"kind", op_kind_name(op.kind)},
                   {"prompt", op.prompt},
                   {"column", op.column},
                   {"params", op.params}});
  j["semantic_ops"] = std::move(ops);
  if (plan.limit)
    j["limit"] = *plan.limit;
  else
    j["limit"] = nullptr;
  j["bound"] = plan.bound;
  return j;
}

}  // namespace proxyq

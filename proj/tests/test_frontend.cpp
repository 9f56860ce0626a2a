#include <string>
#include <vector>

#include "doctest.h"

#include "proxyq/frontend.hpp"
#include "proxyq/rng.hpp"

using namespace proxyq;

TEST_CASE("filter query from the docs parses to one IF op") {
  auto plan = parse_query(
      "SELECT review FROM reviews WHERE AI.IF(\"The review is positive: \", "
      "review)");
  CHECK(plan.source == "reviews");
  REQUIRE(plan.semantic_ops.size() == 1);
  CHECK(plan.semantic_ops[0].kind == OpKind::IF);
  CHECK(plan.semantic_ops[0].prompt == "The review is positive: ");
  CHECK(plan.semantic_ops[0].column == "review");
  CHECK(plan.relational_predicates.empty());
  CHECK(plan.projection() == std::vector<std::string>{"review"});
}

TEST_CASE("plain relational query has no semantic ops") {
  auto plan = parse_query("SELECT a FROM t WHERE a > 5");
  CHECK(plan.semantic_ops.empty());
  REQUIRE(plan.relational_predicates.size() == 1);
  CHECK(plan.relational_predicates[0].column == "a");
  CHECK(plan.relational_predicates[0].cmp == Cmp::GT);
  CHECK(std::get<int64_t>(plan.relational_predicates[0].literal) == 5);
}

TEST_CASE("rank query takes its cutoff from LIMIT") {
  auto plan = parse_query(
      "SELECT AI.RANK(\"relevance to: heart disease\", abstract) FROM docs "
      "LIMIT 10");
  REQUIRE(plan.semantic_ops.size() == 1);
  CHECK(plan.semantic_ops[0].kind == OpKind::RANK);
  CHECK(plan.semantic_ops[0].params.at("top_k") == 10);

  auto no_limit = parse_query("SELECT AI.RANK('q', txt) FROM docs");
  CHECK(no_limit.semantic_ops[0].params.at("top_k") == 10);

  auto lim3 = parse_query("SELECT AI.RANK('q', txt) FROM docs LIMIT 3");
  CHECK(lim3.semantic_ops[0].params.at("top_k") == 3);
}

TEST_CASE("classify query collects category strings") {
  auto plan = parse_query(
      "SELECT AI.CLASSIFY('topic of: ', body, 'tech', 'sport', 'politics') "
      "FROM news");
  REQUIRE(plan.semantic_ops.size() == 1);
  const auto& cats = plan.semantic_ops[0].params.at("categories");
  REQUIRE(cats.size() == 3);
  CHECK(cats[1] == "sport");
}

TEST_CASE("mixed query keeps textual op order and predicate order") {
  auto plan = parse_query(
      "SELECT id, AI.CLASSIFY('kind: ', body, 'a', 'b') FROM t "
      "WHERE score >= 0.5 AND AI.IF('keep? ', body) AND flag = TRUE");
  REQUIRE(plan.semantic_ops.size() == 2);
  CHECK(plan.semantic_ops[0].kind == OpKind::CLASSIFY);
  CHECK(plan.semantic_ops[1].kind == OpKind::IF);
  REQUIRE(plan.relational_predicates.size() == 2);
  CHECK(plan.relational_predicates[0].column == "score");
  CHECK(plan.relational_predicates[1].column == "flag");
  CHECK(std::get<bool>(plan.relational_predicates[1].literal) == true);
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse_query("SELECT a\nFROM t\nWHERE a >");
    FAIL("expected error");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("unknown function names are rejected") {
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.FOO('x', a)"),
                  ParseError);
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE LOWER(a)"), ParseError);
}

TEST_CASE("wrong arity is rejected") {
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.IF('p', a, b)"),
                  ParseError);
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.IF('p')"), ParseError);
  CHECK_THROWS_AS(parse_query("SELECT AI.RANK('p', a, 'x') FROM t"),
                  ParseError);
}

TEST_CASE("empty prompt is rejected") {
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.IF('  ', a)"),
                  ParseError);
}

TEST_CASE("op placement is enforced") {
  CHECK_THROWS_AS(parse_query("SELECT AI.IF('p', a) FROM t"), ParseError);
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.RANK('p', a)"),
                  ParseError);
}

TEST_CASE("LIMIT must be a positive integer") {
  CHECK_THROWS_AS(parse_query("SELECT a FROM t LIMIT 0"), ParseError);
  CHECK_THROWS_AS(parse_query("SELECT a FROM t LIMIT 2.5"), ParseError);
}

TEST_CASE("string escapes round-trip through the lexer") {
  auto plan = parse_query(
      "SELECT a FROM t WHERE AI.IF('has \\'quote\\' and \\\\slash\\\\ and "
      "\\n newline', a)");
  CHECK(plan.semantic_ops[0].prompt ==
        "has 'quote' and \\slash\\ and \n newline");
  CHECK_THROWS_AS(parse_query("SELECT a FROM t WHERE AI.IF('bad \\q', a)"),
                  ParseError);
}

TEST_CASE("binding resolves columns and rejects mismatches") {
  TableSchema schema;
  schema.columns = {{"review", ColType::Text},
                    {"stars", ColType::Int},
                    {"flag", ColType::Bool}};

  auto ok = bind_plan(
      parse_query("SELECT review FROM r WHERE AI.IF('pos? ', review)"),
      schema);
  CHECK(ok.bound);

  CHECK_THROWS_WITH_AS(
      bind_plan(parse_query("SELECT missing_col FROM r"), schema),
      "unknown column: missing_col", BindError);

  try {
    bind_plan(parse_query("SELECT review FROM r WHERE AI.IF('p? ', stars)"),
              schema);
    FAIL("expected bind error");
  } catch (const BindError& e) {
    CHECK(std::string(e.what()).find("requires text column") !=
          std::string::npos);
  }

  CHECK_THROWS_AS(
      bind_plan(parse_query("SELECT review FROM r WHERE stars = 'five'"),
                schema),
      BindError);
  CHECK_THROWS_AS(
      bind_plan(parse_query("SELECT review FROM r WHERE nope > 1"), schema),
      BindError);
}

TEST_CASE("plan JSON exposes the full decomposition") {
  auto plan = parse_query(
      "SELECT id, AI.RANK('rel: ', body) FROM docs WHERE year >= 2000 LIMIT "
      "5");
  auto j = plan_to_json(plan);
  CHECK(j["source"] == "docs");
  CHECK(j["semantic_ops"][0]["kind"] == "RANK");
  CHECK(j["semantic_ops"][0]["params"]["top_k"] == 5);
  CHECK(j["relational_predicates"][0]["cmp"] == ">=");
  CHECK(j["limit"] == 5);
}

namespace {

// Grammar-directed query sampler for the round-trip property.
struct QueryGen {
  Rng rng;

  explicit QueryGen(uint64_t seed) : rng(seed) {}

  std::string ws() {
    static const char* opts[] = {" ", "  ", " \n ", "\t"};
    return opts[rng.uniform_int(4)];
  }

  std::string casing(std::string s) {
    for (char& c : s)
      if (rng.uniform() < 0.5) c = static_cast<char>(std::toupper(c));
    return s;
  }

  std::string ident() {
    static const char* pool[] = {"review", "body",  "abstract", "score",
                                 "stars",  "flag",  "year",     "title",
                                 "txt",    "col_a", "col_b",    "x9"};
    return pool[rng.uniform_int(12)];
  }

  std::string str_lit(bool prompt) {
    char quote = rng.uniform() < 0.5 ? '\'' : '"';
    static const std::string pool = " abcXYZ09,.()'\"\\\n\t:;-";
    size_t len = rng.uniform_int(12);
    std::string body = prompt ? "p" : "";
    for (size_t k = 0; k < len; ++k) body += pool[rng.uniform_int(pool.size())];
    std::string out(1, quote);
    for (char c : body) {
      if (c == quote || c == '\\') {
        out += '\\';
        out += c;
      } else if (c == '\n') {
        out += "\\n";
      } else if (c == '\t') {
        out += "\\t";
      } else {
        out += c;
      }
    }
    out += quote;
    return out;
  }

  std::string number() {
    if (rng.uniform() < 0.5)
      return std::to_string(static_cast<int64_t>(rng.uniform_int(1000001)));
    static const char* reals[] = {"0.5", "2.25", "1e3", "3.5e-2", "123.456"};
    return reals[rng.uniform_int(5)];
  }

  std::string literal() {
    double r = rng.uniform();
    if (r < 0.4) return number();
    if (r < 0.55) return "-" + number();
    if (r < 0.8) return str_lit(false);
    return casing(rng.uniform() < 0.5 ? "true" : "false");
  }

  std::string cmp() {
    static const char* ops[] = {"=", "==", "!=", "<>", "<", "<=", ">", ">="};
    return ops[rng.uniform_int(8)];
  }

  std::string ai_call(const char* fn, bool cats) {
    std::string out = casing("ai") + "." + casing(fn) + "(" + str_lit(true) +
                      "," + ws() + ident();
    if (cats) {
      size_t n = rng.uniform_int(4);
      for (size_t k = 0; k < n; ++k) out += "," + ws() + str_lit(false);
    }
    out += ")";
    return out;
  }

  std::string query() {
    std::string q = casing("select") + ws();
    if (rng.uniform() < 0.15) {
      q += "*";
    } else {
      size_t items = 1 + rng.uniform_int(3);
      for (size_t k = 0; k < items; ++k) {
        if (k) q += "," + ws();
        double r = rng.uniform();
        if (r < 0.2)
          q += ai_call("rank", false);
        else if (r < 0.4)
          q += ai_call("classify", true);
        else
          q += ident();
      }
    }
    q += ws() + casing("from") + ws() + ident();
    if (rng.uniform() < 0.7) {
      q += ws() + casing("where") + ws();
      size_t preds = 1 + rng.uniform_int(3);
      for (size_t k = 0; k < preds; ++k) {
        if (k) q += ws() + casing("and") + ws();
        if (rng.uniform() < 0.4)
          q += ai_call("if", false);
        else
          q += ident() + ws() + cmp() + ws() + literal();
      }
    }
    if (rng.uniform() < 0.3)
      q += ws() + casing("limit") + ws() +
           std::to_string(1 + rng.uniform_int(100));
    return q;
  }
};

}  // namespace

TEST_CASE("pretty-print round trip holds over generated queries") {
  QueryGen gen(20260801);
  for (int iter = 0; iter < 300; ++iter) {
    std::string sql = gen.query();
    CAPTURE(sql);
    LogicalPlan p1 = parse_query(sql);
    std::string printed = pretty_print(p1);
    CAPTURE(printed);
    LogicalPlan p2 = parse_query(printed);
    CHECK(plans_equal(p1, p2));
    // Printing is a fixpoint after one pass.
    CHECK(pretty_print(p2) == printed);
  }
}

TEST_CASE("parsing is deterministic") {
  std::string sql =
      "SELECT id, AI.CLASSIFY('k: ', body, 'a', 'b') FROM t WHERE x > 1 "
      "AND AI.IF('keep: ', body) LIMIT 7";
  CHECK(plans_equal(parse_query(sql), parse_query(sql)));
  CHECK(pretty_print(parse_query(sql)) == pretty_print(parse_query(sql)));
}

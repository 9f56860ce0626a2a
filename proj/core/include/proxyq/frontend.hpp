#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "proxyq/dataset.hpp"
#include "proxyq/errors.hpp"

namespace proxyq {

enum class OpKind { IF, RANK, CLASSIFY };

std::string op_kind_name(OpKind k);

struct SemanticOp {
  OpKind kind = OpKind::IF;
  std::string prompt;  // the semantic query, passed to the oracle
  std::string column;  // unstructured column the op reads
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const SemanticOp&) const = default;
};

// One entry of the SELECT list, in textual order. Ops are stored once
// in LogicalPlan::semantic_ops and referenced by index here.
struct SelectItem {
  bool is_op = false;
  std::string column;
  size_t op_index = 0;

  bool operator==(const SelectItem&) const = default;
};

struct LogicalPlan {
  std::string source;
  bool star = false;
  std::vector<SelectItem> select_items;
  std::vector<RelPredicate> relational_predicates;
  std::vector<SemanticOp> semantic_ops;  // textual order of appearance
  std::optional<int64_t> limit;
  bool bound = false;

  std::vector<std::string> projection() const;
};

bool plans_equal(const LogicalPlan& a, const LogicalPlan& b);

// Grammar: SELECT items FROM table [WHERE pred [AND pred]*] [LIMIT n].
// AI.IF(prompt, column) may appear as a WHERE predicate; AI.RANK and
// AI.CLASSIFY as select expressions. Prompts are single- or
// double-quoted with backslash escapes. RANK takes its cutoff from
// LIMIT, defaulting to 10.
LogicalPlan parse_query(const std::string& sql_text);

// Emits canonical text that reparses to an equal plan.
std::string pretty_print(const LogicalPlan& plan);

struct TableSchema {
  std::vector<std::pair<std::string, ColType>> columns;

  static TableSchema of(const Table& t);
  const ColType* find(const std::string& name) const;
};

// Resolves all column references and rejects type mismatches; semantic
// ops must target text columns.
LogicalPlan bind_plan(const LogicalPlan& plan, const TableSchema& schema);

nlohmann::json plan_to_json(const LogicalPlan& plan);

}  // namespace proxyq

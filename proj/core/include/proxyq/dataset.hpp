#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "proxyq/errors.hpp"

namespace proxyq {

using MatRXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Null is monostate. Integer literals stay int64 until a real shows up
// in the same column, then the column promotes.
using Value = std::variant<std::monostate, int64_t, double, std::string, bool>;

enum class ColType { Int, Real, Text, Bool };

std::string col_type_name(ColType t);

enum class Cmp { EQ, NE, LT, LE, GT, GE };

Cmp parse_cmp(const std::string& tok);
std::string cmp_name(Cmp c);

struct RelPredicate {
  std::string column;
  Cmp cmp = Cmp::EQ;
  Value literal;
};

// True when the (non-null) value satisfies the comparison. Nulls never
// match. Throws DataError on int/text style mismatches.
bool eval_cmp(const Value& lhs, Cmp cmp, const Value& rhs);

struct Column {
  ColType type = ColType::Int;
  std::vector<int64_t> ints;
  std::vector<double> reals;
  std::vector<std::string> texts;
  std::vector<uint8_t> bools;
  std::vector<uint8_t> nulls;  // 1 = null, parallel to the value vector

  size_t size() const { return nulls.size(); }
  bool is_null(size_t row) const { return nulls[row] != 0; }
  Value get(size_t row) const;
};

class Table {
 public:
  std::string name;

  size_t n_rows() const { return ids_.size(); }
  size_t n_cols() const { return cols_.size(); }
  const std::vector<std::string>& column_names() const { return names_; }
  bool has_column(const std::string& n) const {
    return index_.count(n) != 0;
  }
  const Column& column(const std::string& n) const;
  ColType column_type(const std::string& n) const;

  int64_t id_at(size_t row) const { return ids_[row]; }
  const std::vector<int64_t>& ids() const { return ids_; }
  // Row position for an id; throws DataError when absent.
  size_t row_of(int64_t id) const;
  bool has_id(int64_t id) const { return id_rows_.count(id) != 0; }

  Value cell(size_t row, const std::string& col) const;
  const std::string& text_cell(size_t row, const std::string& col) const;

  // Internal builders, used by the loaders and the synthesizer.
  void add_column(const std::string& n, ColType t);
  void append_row(int64_t id, const std::vector<Value>& vals);
  void promote_to_real(const std::string& n);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<Column> cols_;
  std::vector<int64_t> ids_;
  std::unordered_map<int64_t, size_t> id_rows_;
};

enum class TableFormat { Jsonl, Csv };

// Row order follows file order. JSONL records may omit keys (null) and
// may introduce new columns mid-file; earlier rows backfill as null.
// An `id` field must be a unique non-negative integer; when absent
// everywhere, ids are synthesized from row order.
Table load_table(const std::string& path, TableFormat format);
Table parse_table_jsonl(const std::string& body, const std::string& origin);
Table parse_table_csv(const std::string& body, const std::string& origin);

// Canonical JSONL: one object per line, keys sorted, nulls omitted,
// id always present. serialize(parse(serialize(t))) is byte-identical.
std::string serialize_table(const Table& t);

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(int dim, size_t reserve_rows);

  int dim() const { return dim_; }
  size_t size() const { return ids_.size(); }
  const std::vector<int64_t>& ids() const { return ids_; }
  bool has(int64_t id) const { return rows_.count(id) != 0; }
  Eigen::Map<const Eigen::RowVectorXf> vec(int64_t id) const;
  // Row i holds the vector of ids()[i]. Compacts spare capacity on call.
  const MatRXf& matrix() const;

  void add(int64_t id, const float* data);
  // Ids present here but absent from the table; reported, not fatal.
  size_t orphan_count(const Table& t) const;

 private:
  int dim_ = 0;
  size_t used_ = 0;
  std::vector<int64_t> ids_;
  std::unordered_map<int64_t, size_t> rows_;
  mutable MatRXf mat_;
};

// JSONL records {"id": int, "vec": [floats]}. Rejects mixed dimensions
// and non-finite entries; expected_dim (when >0) is enforced.
EmbeddingStore load_embeddings(const std::string& path, int expected_dim = 0);
std::string serialize_embeddings(const EmbeddingStore& s);

struct Slice {
  std::string name;
  std::vector<RelPredicate> predicate;  // conjunction
};

std::vector<int64_t> apply_slice(const Table& t, const Slice& s);
bool row_matches(const Table& t, size_t row,
                 const std::vector<RelPredicate>& preds);

// Verifies a declared family is a partition: pairwise disjoint and
// covering. Throws DataError naming the first offending row otherwise.
void check_partition(const Table& t, const std::vector<Slice>& slices);

}  // namespace proxyq

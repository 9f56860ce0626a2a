#include "proxyq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <map>
#include <sstream>

#include "json.hpp"

#include "proxyq/jsonl.hpp"

namespace proxyq {

using json = nlohmann::json;

std::string col_type_name(ColType t) {
  switch (t) {
    case ColType::Int: return "int";
    case ColType::Real: return "real";
    case ColType::Text: return "text";
    case ColType::Bool: return "bool";
  }
  return "?";
}

Cmp parse_cmp(const std::string& tok) {
  if (tok == "=" || tok == "==") return Cmp::EQ;
  if (tok == "!=" || tok == "<>") return Cmp::NE;
  if (tok == "<") return Cmp::LT;
  if (tok == "<=") return Cmp::LE;
  if (tok == ">") return Cmp::GT;
  if (tok == ">=") return Cmp::GE;
  throw DataError("unknown comparator: " + tok);
}

std::string cmp_name(Cmp c) {
  switch (c) {
    case Cmp::EQ: return "=";
    case Cmp::NE: return "!=";
    case Cmp::LT: return "<";
    case Cmp::LE: return "<=";
    case Cmp::GT: return ">";
    case Cmp::GE: return ">=";
  }
  return "?";
}

namespace {

bool is_num(const Value& v) {
  return std::holds_alternative<int64_t>(v) ||
         std::holds_alternative<double>(v);
}

double as_num(const Value& v) {
  if (std::holds_alternative<int64_t>(v))
    return static_cast<double>(std::get<int64_t>(v));
  return std::get<double>(v);
}

int order(double a, double b) { return a < b ? -1 : (a > b ? 1 : 0); }

int order_values(const Value& a, const Value& b) {
  if (is_num(a) && is_num(b)) return order(as_num(a), as_num(b));
  if (std::holds_alternative<std::string>(a) &&
      std::holds_alternative<std::string>(b)) {
    const auto& x = std::get<std::string>(a);
    const auto& y = std::get<std::string>(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (std::holds_alternative<bool>(a) && std::holds_alternative<bool>(b))
    return order(std::get<bool>(a) ? 1 : 0, std::get<bool>(b) ? 1 : 0);
  throw DataError("type mismatch in comparison");
}

std::string value_type_name(const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return "null";
  if (std::holds_alternative<int64_t>(v)) return "int";
  if (std::holds_alternative<double>(v)) return "real";
  if (std::holds_alternative<std::string>(v)) return "text";
  return "bool";
}

}  // namespace

bool eval_cmp(const Value& lhs, Cmp cmp, const Value& rhs) {
  if (std::holds_alternative<std::monostate>(lhs) ||
      std::holds_alternative<std::monostate>(rhs))
    return false;
  int o = order_values(lhs, rhs);
  switch (cmp) {
    case Cmp::EQ: return o == 0;
    case Cmp::NE: return o != 0;
    case Cmp::LT: return o < 0;
    case Cmp::LE: return o <= 0;
    case Cmp::GT: return o > 0;
    case Cmp::GE: return o >= 0;
  }
  return false;
}

Value Column::get(size_t row) const {
  if (is_null(row)) return std::monostate{};
  switch (type) {
    case ColType::Int: return ints[row];
    case ColType::Real: return reals[row];
    case ColType::Text: return texts[row];
    case ColType::Bool: return bools[row] != 0;
  }
  return std::monostate{};
}

const Column& Table::column(const std::string& n) const {
  auto it = index_.find(n);
  if (it == index_.end()) throw DataError("unknown column: " + n);
  return cols_[it->second];
}

ColType Table::column_type(const std::string& n) const {
  return column(n).type;
}

size_t Table::row_of(int64_t id) const {
  auto it = id_rows_.find(id);
  if (it == id_rows_.end())
    throw DataError("no row with id " + std::to_string(id));
  return it->second;
}

Value Table::cell(size_t row, const std::string& col) const {
  return column(col).get(row);
}

const std::string& Table::text_cell(size_t row, const std::string& col) const {
  const Column& c = column(col);
  if (c.type != ColType::Text)
    throw DataError("column " + col + " is " + col_type_name(c.type) +
                    ", expected text");
  if (c.is_null(row)) {
    static const std::string kEmpty;
    return kEmpty;
  }
  return c.texts[row];
}

void Table::add_column(const std::string& n, ColType t) {
  if (index_.count(n)) throw DataError("duplicate column: " + n);
  index_[n] = static_cast<int>(cols_.size());
  names_.push_back(n);
  Column c;
  c.type = t;
  size_t rows = n_rows();
  c.nulls.assign(rows, 1);
  switch (t) {
    case ColType::Int: c.ints.assign(rows, 0); break;
    case ColType::Real: c.reals.assign(rows, 0.0); break;
    case ColType::Text: c.texts.assign(rows, std::string()); break;
    case ColType::Bool: c.bools.assign(rows, 0); break;
  }
  cols_.push_back(std::move(c));
}

void Table::promote_to_real(const std::string& n) {
  auto it = index_.find(n);
  if (it == index_.end()) throw DataError("unknown column: " + n);
  Column& c = cols_[it->second];
  if (c.type == ColType::Real) return;
  if (c.type != ColType::Int)
    throw DataError("cannot promote " + col_type_name(c.type) + " column " +
                    n + " to real");
  c.reals.resize(c.ints.size());
  std::transform(c.ints.begin(), c.ints.end(), c.reals.begin(),
                 [](int64_t v) { return static_cast<double>(v); });
  c.ints.clear();
  c.ints.shrink_to_fit();
  c.type = ColType::Real;
}

void Table::append_row(int64_t id, const std::vector<Value>& vals) {
  if (vals.size() != cols_.size())
    throw DataError("row width mismatch");
  if (id < 0) throw DataError("negative id " + std::to_string(id));
  if (id_rows_.count(id))
    throw DataError("duplicate id " + std::to_string(id));
  for (size_t ci = 0; ci < cols_.size(); ++ci) {
    Column& c = cols_[ci];
    const Value& v = vals[ci];
    bool null = std::holds_alternative<std::monostate>(v);
    c.nulls.push_back(null ? 1 : 0);
    switch (c.type) {
      case ColType::Int:
        c.ints.push_back(null ? 0 : std::get<int64_t>(v));
        break;
      case ColType::Real:
        c.reals.push_back(null ? 0.0 : as_num(v));
        break;
      case ColType::Text:
        c.texts.push_back(null ? std::string() : std::get<std::string>(v));
        break;
      case ColType::Bool:
        c.bools.push_back(null ? 0 : (std::get<bool>(v) ? 1 : 0));
        break;
    }
  }
  id_rows_[id] = ids_.size();
  ids_.push_back(id);
}

namespace {

ColType type_of_json(const json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) return ColType::Int;
  if (v.is_number_float()) return ColType::Real;
  if (v.is_string()) return ColType::Text;
  if (v.is_boolean()) return ColType::Bool;
  throw DataError("unsupported value type");
}

Value value_of_json(const json& v, ColType t) {
  switch (t) {
    case ColType::Int:
      return static_cast<int64_t>(v.get<int64_t>());
    case ColType::Real:
      return v.get<double>();
    case ColType::Text:
      return v.get<std::string>();
    case ColType::Bool:
      return v.get<bool>();
  }
  return std::monostate{};
}

// Raw row kept until the full schema is known.
struct PendingRow {
  int line = 0;
  int64_t id = -1;
  bool has_id = false;
  std::map<std::string, json> vals;
};

}  // namespace

Table parse_table_jsonl(const std::string& body, const std::string& origin) {
  std::vector<PendingRow> rows;
  std::map<std::string, ColType> schema;  // ordered for determinism
  bool any_id = false;

  std::istringstream in(body);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(origin + ": malformed record on line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object())
      throw DataError(origin + ": malformed record on line " +
                      std::to_string(line_no) + ": expected an object");
    PendingRow r;
    r.line = line_no;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "id") {
        if (!v.is_number_integer() && !v.is_number_unsigned())
          throw DataError(origin + ": id must be an integer on line " +
                          std::to_string(line_no));
        r.id = v.get<int64_t>();
        if (r.id < 0)
          throw DataError(origin + ": negative id on line " +
                          std::to_string(line_no));
        r.has_id = true;
        any_id = true;
        continue;
      }
      if (v.is_null()) {
        r.vals[key] = v;
        continue;
      }
      ColType t;
      try {
        t = type_of_json(v);
      } catch (const DataError&) {
        throw DataError(origin + ": unsupported value for \"" + key +
                        "\" on line " + std::to_string(line_no));
      }
      auto sit = schema.find(key);
      if (sit == schema.end()) {
        schema[key] = t;
      } else if (sit->second != t) {
        bool numeric_pair =
            (sit->second == ColType::Int && t == ColType::Real) ||
            (sit->second == ColType::Real && t == ColType::Int);
        if (numeric_pair) {
          sit->second = ColType::Real;
        } else {
          throw DataError(origin + ": column \"" + key + "\" is " +
                          col_type_name(sit->second) + " but line " +
                          std::to_string(line_no) + " has " +
                          col_type_name(t));
        }
      }
      r.vals[key] = v;
    }
    rows.push_back(std::move(r));
  }

  Table t;
  t.name = origin;
  for (const auto& [key, type] : schema) t.add_column(key, type);

  std::unordered_map<int64_t, int> id_lines;
  int64_t next_id = 0;
  for (const PendingRow& r : rows) {
    int64_t id;
    if (any_id) {
      if (!r.has_id)
        throw DataError(origin + ": missing id on line " +
                        std::to_string(r.line));
      id = r.id;
    } else {
      id = next_id++;
    }
    auto [it, fresh] = id_lines.emplace(id, r.line);
    if (!fresh)
      throw DataError(origin + ": duplicate id " + std::to_string(id) +
                      " on line " + std::to_string(r.line) +
                      " (first seen on line " + std::to_string(it->second) +
                      ")");
    std::vector<Value> vals;
    vals.reserve(schema.size());
    for (const auto& [key, type] : schema) {
      auto vit = r.vals.find(key);
      if (vit == r.vals.end() || vit->second.is_null()) {
        vals.emplace_back(std::monostate{});
      } else {
        vals.push_back(value_of_json(vit->second, type));
      }
    }
    t.append_row(id, vals);
  }
  return t;
}

namespace {

// One CSV record; handles quoted fields with "" escapes and embedded
// newlines. Returns false at end of input.
bool next_csv_record(const std::string& body, size_t& pos, int& line_no,
                     std::vector<std::string>& fields,
                     std::vector<bool>& quoted, int& record_line,
                     const std::string& origin) {
  fields.clear();
  quoted.clear();
  size_t n = body.size();
  while (pos < n && (body[pos] == '\n' || body[pos] == '\r')) {
    if (body[pos] == '\n') ++line_no;
    ++pos;
  }
  if (pos >= n) return false;
  record_line = line_no + 1;

  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  while (pos < n) {
    char c = body[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < n && body[pos + 1] == '"') {
          field += '"';
          pos += 2;
        } else {
          in_quotes = false;
          ++pos;
        }
      } else {
        if (c == '\n') ++line_no;
        field += c;
        ++pos;
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_quoted) {
      in_quotes = true;
      field_quoted = true;
      ++pos;
      continue;
    }
    if (c == ',') {
      fields.push_back(std::move(field));
      quoted.push_back(field_quoted);
      field.clear();
      field_quoted = false;
      ++pos;
      continue;
    }
    if (c == '\r') {
      ++pos;
      continue;
    }
    if (c == '\n') {
      ++line_no;
      ++pos;
      break;
    }
    field += c;
    ++pos;
  }
  if (in_quotes)
    throw DataError(origin + ": unterminated quote in record starting on line " +
                    std::to_string(record_line));
  fields.push_back(std::move(field));
  quoted.push_back(field_quoted);
  return true;
}

json csv_field_to_json(const std::string& s, bool was_quoted) {
  if (!was_quoted) {
    if (s.empty()) return json();
    if (s == "true") return json(true);
    if (s == "false") return json(false);
    {
      int64_t iv = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), iv);
      if (ec == std::errc() && p == s.data() + s.size()) return json(iv);
    }
    {
      char* end = nullptr;
      errno = 0;
      double dv = std::strtod(s.c_str(), &end);
      if (errno == 0 && end == s.c_str() + s.size() && std::isfinite(dv))
        return json(dv);
    }
  }
  return json(s);
}

}  // namespace

Table parse_table_csv(const std::string& body, const std::string& origin) {
  size_t pos = 0;
  int line_no = 0;
  int record_line = 0;
  std::vector<std::string> fields;
  std::vector<bool> quoted;

  if (!next_csv_record(body, pos, line_no, fields, quoted, record_line,
                       origin)) {
    Table empty;
    empty.name = origin;
    return empty;
  }
  std::vector<std::string> header = fields;
  for (const std::string& h : header)
    if (h.empty())
      throw DataError(origin + ": empty column name in header");

  // Reuse the JSONL path by rebuilding rows as JSON objects; keeps the
  // schema unification rules in one place.
  std::string jsonl;
  while (next_csv_record(body, pos, line_no, fields, quoted, record_line,
                         origin)) {
    if (fields.size() != header.size())
      throw DataError(origin + ": record on line " +
                      std::to_string(record_line) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    json obj = json::object();
    for (size_t i = 0; i < header.size(); ++i)
      obj[header[i]] = csv_field_to_json(fields[i], quoted[i]);
    jsonl += obj.dump();
    jsonl += '\n';
  }
  return parse_table_jsonl(jsonl, origin);
}

Table load_table(const std::string& path, TableFormat format) {
  std::string body = read_text_file(path);
  return format == TableFormat::Jsonl ? parse_table_jsonl(body, path)
                                      : parse_table_csv(body, path);
}

std::string serialize_table(const Table& t) {
  std::string out;
  const auto& names = t.column_names();
  for (size_t r = 0; r < t.n_rows(); ++r) {
    json obj = json::object();
    obj["id"] = t.id_at(r);
    for (const std::string& n : names) {
      Value v = t.cell(r, n);
      if (std::holds_alternative<std::monostate>(v)) continue;
      if (std::holds_alternative<int64_t>(v))
        obj[n] = std::get<int64_t>(v);
      else if (std::holds_alternative<double>(v))
        obj[n] = std::get<double>(v);
      else if (std::holds_alternative<bool>(v))
        obj[n] = std::get<bool>(v);
      else
        obj[n] = std::get<std::string>(v);
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

EmbeddingStore::EmbeddingStore(int dim, size_t reserve_rows) : dim_(dim) {
  if (dim <= 0) throw DataError("embedding dimension must be positive");
  mat_.resize(static_cast<Eigen::Index>(reserve_rows), dim);
}

const MatRXf& EmbeddingStore::matrix() const {
  if (mat_.rows() != static_cast<Eigen::Index>(used_))
    mat_.conservativeResize(static_cast<Eigen::Index>(used_), dim_);
  return mat_;
}

Eigen::Map<const Eigen::RowVectorXf> EmbeddingStore::vec(int64_t id) const {
  auto it = rows_.find(id);
  if (it == rows_.end())
    throw DataError("no embedding for id " + std::to_string(id));
  return Eigen::Map<const Eigen::RowVectorXf>(
      mat_.row(static_cast<Eigen::Index>(it->second)).data(), dim_);
}

void EmbeddingStore::add(int64_t id, const float* data) {
  if (dim_ <= 0) throw DataError("embedding store has no dimension");
  if (rows_.count(id))
    throw DataError("duplicate embedding id " + std::to_string(id));
  if (used_ == static_cast<size_t>(mat_.rows())) {
    Eigen::Index grown = std::max<Eigen::Index>(16, mat_.rows() * 2);
    mat_.conservativeResize(grown, dim_);
  }
  for (int j = 0; j < dim_; ++j) {
    if (!std::isfinite(data[j]))
      throw DataError("non-finite embedding entry for id " +
                      std::to_string(id));
    mat_(static_cast<Eigen::Index>(used_), j) = data[j];
  }
  rows_[id] = used_;
  ids_.push_back(id);
  ++used_;
}

size_t EmbeddingStore::orphan_count(const Table& t) const {
  size_t orphans = 0;
  for (int64_t id : ids_)
    if (!t.has_id(id)) ++orphans;
  return orphans;
}

EmbeddingStore load_embeddings(const std::string& path, int expected_dim) {
  EmbeddingStore store;
  std::vector<float> buf;
  bool have_dim = false;
  int dim = 0;

  for_each_jsonl(path, [&](int line_no, const json& obj) {
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("vec"))
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": expected {\"id\", \"vec\"}");
    const json& jid = obj.at("id");
    if (!jid.is_number_integer() && !jid.is_number_unsigned())
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": id must be an integer");
    int64_t id = jid.get<int64_t>();
    const json& jv = obj.at("vec");
    if (!jv.is_array() || jv.empty())
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": vec must be a non-empty array");
    if (!have_dim) {
      dim = static_cast<int>(jv.size());
      if (expected_dim > 0 && dim != expected_dim)
        throw DataError(path + ": dimension " + std::to_string(dim) +
                        ", expected " + std::to_string(expected_dim));
      store = EmbeddingStore(dim, 1024);
      have_dim = true;
    } else if (static_cast<int>(jv.size()) != dim) {
      throw DataError(path + ": mixed dimensions: line " +
                      std::to_string(line_no) + " has " +
                      std::to_string(jv.size()) + ", expected " +
                      std::to_string(dim));
    }
    buf.resize(dim);
    for (int j = 0; j < dim; ++j) {
      const json& e = jv[j];
      if (!e.is_number())
        throw DataError(path + ": line " + std::to_string(line_no) +
                        ": vec entries must be numbers");
      double d = e.get<double>();
      if (!std::isfinite(d))
        throw DataError(path + ": line " + std::to_string(line_no) +
                        ": non-finite entry in vec");
      buf[j] = static_cast<float>(d);
    }
    try {
      store.add(id, buf.data());
    } catch (const DataError& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  });
  return store;
}

std::string serialize_embeddings(const EmbeddingStore& s) {
  std::string out;
  for (int64_t id : s.ids()) {
    json obj = json::object();
    obj["id"] = id;
    json arr = json::array();
    auto v = s.vec(id);
    for (int j = 0; j < s.dim(); ++j) arr.push_back(v[j]);
    obj["vec"] = std::move(arr);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

bool row_matches(const Table& t, size_t row,
                 const std::vector<RelPredicate>& preds) {
  for (const RelPredicate& p : preds) {
    Value v = t.cell(row, p.column);
    if (!eval_cmp(v, p.cmp, p.literal)) return false;
  }
  return true;
}

std::vector<int64_t> apply_slice(const Table& t, const Slice& s) {
  std::vector<int64_t> out;
  for (size_t r = 0; r < t.n_rows(); ++r)
    if (row_matches(t, r, s.predicate)) out.push_back(t.id_at(r));
  return out;
}

void check_partition(const Table& t, const std::vector<Slice>& slices) {
  for (size_t r = 0; r < t.n_rows(); ++r) {
    int hits = 0;
    for (const Slice& s : slices)
      if (row_matches(t, r, s.predicate)) ++hits;
    if (hits != 1)
      throw DataError("slice family is not a partition: row id " +
                      std::to_string(t.id_at(r)) + " matches " +
                      std::to_string(hits) + " slices");
  }
}

}  // namespace proxyq

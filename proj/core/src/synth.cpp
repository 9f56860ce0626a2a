#include "proxyq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "json.hpp"
#include "proxyq/errors.hpp"
#include "proxyq/jsonl.hpp"
#include "proxyq/rng.hpp"

namespace proxyq {

using nlohmann::json;

std::vector<int64_t> apportion_largest_remainder(
    int64_t total, const std::vector<double>& weights) {
  if (total < 0) throw DataError("apportionment total must be nonnegative");
  if (weights.empty()) throw DataError("apportionment needs weights");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw DataError("apportionment weights must be positive");
    wsum += w;
  }
  std::vector<int64_t> out(weights.size(), 0);
  std::vector<std::pair<double, size_t>> frac;
  int64_t assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    double target = total * weights[i] / wsum;
    out[i] = static_cast<int64_t>(std::floor(target));
    assigned += out[i];
    frac.emplace_back(target - std::floor(target), i);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int64_t rem = total - assigned;
  for (int64_t i = 0; i < rem; ++i) out[frac[static_cast<size_t>(i)].second] += 1;
  return out;
}

namespace {

const char* kSyllables[] = {"ba", "re", "mo", "ti",  "su",  "ka",
                            "lo", "ne", "vi", "da",  "pu",  "ger",
                            "som", "tal", "wen", "rix"};
const char* kStopwords[] = {"the", "of", "and", "to", "a"};

std::vector<std::string> keyword_pool(uint64_t seed, uint64_t pool_key,
                                      int tag) {
  Rng rng(mix64(seed ^ mix64(pool_key + 0xC1A55ULL)));
  std::vector<std::string> pool;
  std::string suffix = kSyllables[tag % 16];
  if (tag >= 16) suffix += std::to_string(tag / 16);
  for (int i = 0; i < 12; ++i) {
    std::string w;
    int syls = 2 + static_cast<int>(rng.uniform_int(2));
    for (int s = 0; s < syls; ++s)
      w += kSyllables[rng.uniform_int(16)];
    pool.push_back(w + suffix);
  }
  return pool;
}

std::string draw_text(Rng& rng, const std::vector<std::string>& pool) {
  int n = 6 + static_cast<int>(rng.uniform_int(5));
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    if (rng.uniform() < 0.25)
      out += kStopwords[rng.uniform_int(5)];
    else
      out += pool[rng.uniform_int(pool.size())];
  }
  return out;
}

void validate_common(const SynthSpec& spec) {
  if (spec.n_rows <= 0) throw DataError("synth: n_rows must be positive");
  if (spec.cluster_separation < 0)
    throw DataError("synth: cluster_separation must be >= 0");
  if (spec.dim < 2) throw DataError("synth: dim must be >= 2");
  if (spec.oracle_noise < 0 || spec.oracle_noise > 1)
    throw DataError("synth: oracle_noise must lie in [0,1]");
}

struct DocDraft {
  std::string text;
  std::vector<float> vec;
  int64_t bucket = 0;
  int gold = -1;
  int64_t query = -1;
  int level = 0;
};

SynthData assemble(const SynthSpec& spec, std::vector<DocDraft> docs,
                   Rng& rng, bool rank) {
  rng.shuffle(docs);
  SynthData out;
  out.table.name = "synthetic";
  out.table.add_column("text", ColType::Text);
  out.table.add_column("bucket", ColType::Int);
  out.embeddings = EmbeddingStore(spec.dim, docs.size());
  for (size_t i = 0; i < docs.size(); ++i) {
    int64_t id = static_cast<int64_t>(i);
    out.table.append_row(id, {docs[i].text, docs[i].bucket});
    out.embeddings.add(id, docs[i].vec.data());
    if (!rank) out.gold.push_back(docs[i].gold);
    if (rank && docs[i].query >= 0)
      out.qrels[docs[i].query][id] = docs[i].level;
  }
  return out;
}

}  // namespace

SynthData generate_synth(const SynthSpec& spec) {
  validate_common(spec);
  Rng rng(mix64(spec.seed + 0x5EEDDA7AULL));

  if (spec.mode != SynthMode::Rank) {
    if (spec.n_classes < 2) throw DataError("synth: n_classes must be >= 2");
    if (spec.imbalance_ratio < 1.0)
      throw DataError("synth: imbalance_ratio must be >= 1");
    if (spec.dim < spec.n_classes)
      throw DataError("synth: dim must be >= n_classes");

    std::vector<double> weights(spec.n_classes);
    for (int c = 0; c < spec.n_classes; ++c)
      weights[c] = spec.imbalance_ratio -
                   (spec.imbalance_ratio - 1.0) * c / (spec.n_classes - 1);
    std::vector<int64_t> counts =
        apportion_largest_remainder(spec.n_rows, weights);

    std::vector<std::vector<std::string>> pools;
    bool blind = spec.cluster_separation == 0.0;
    if (blind) {
      pools.push_back(keyword_pool(spec.seed, 0xFFFFULL, 15));
    } else {
      for (int c = 0; c < spec.n_classes; ++c)
        pools.push_back(keyword_pool(spec.seed, static_cast<uint64_t>(c), c));
    }

    double offset = spec.cluster_separation / std::sqrt(2.0);
    std::vector<DocDraft> docs;
    docs.reserve(static_cast<size_t>(spec.n_rows));
    for (int c = 0; c < spec.n_classes; ++c) {
      for (int64_t i = 0; i < counts[c]; ++i) {
        DocDraft d;
        d.gold = c;
        d.text = draw_text(rng, pools[blind ? 0 : c]);
        d.bucket = static_cast<int64_t>(rng.uniform_int(8));
        d.vec.resize(spec.dim);
        for (int j = 0; j < spec.dim; ++j)
          d.vec[j] = static_cast<float>(rng.normal());
        d.vec[c] += static_cast<float>(offset);
        docs.push_back(std::move(d));
      }
    }
    return assemble(spec, std::move(docs), rng, false);
  }

  // rank mode
  int64_t corpus = spec.corpus_size > 0 ? spec.corpus_size : spec.n_rows;
  if (spec.levels < 2) throw DataError("synth: rank mode needs levels >= 2");
  if (spec.relevant_per_query < 1)
    throw DataError("synth: relevant_per_query must be >= 1");
  if (spec.n_queries < 1) throw DataError("synth: n_queries must be >= 1");
  if (spec.relevant_per_query > corpus)
    throw DataError("synth: infeasible spec, relevant_per_query " +
                    std::to_string(spec.relevant_per_query) +
                    " exceeds corpus size " + std::to_string(corpus));
  int64_t needed =
      static_cast<int64_t>(spec.relevant_per_query) * spec.n_queries;
  if (needed > corpus)
    throw DataError(
        "synth: infeasible spec, queries need " + std::to_string(needed) +
        " distinct relevant docs but corpus has " + std::to_string(corpus));

  SynthData pre;
  std::vector<Eigen::VectorXf> dirs;
  std::vector<std::vector<std::string>> qpools;
  for (int q = 0; q < spec.n_queries; ++q) {
    Eigen::VectorXf d(spec.dim);
    for (int j = 0; j < spec.dim; ++j)
      d(j) = static_cast<float>(rng.normal());
    d.normalize();
    dirs.push_back(d);
    qpools.push_back(
        keyword_pool(spec.seed, 0x9000ULL + static_cast<uint64_t>(q), q));
  }
  std::vector<std::string> background =
      keyword_pool(spec.seed, 0xFFFFULL, 15);

  std::vector<DocDraft> docs;
  docs.reserve(static_cast<size_t>(corpus));
  for (int64_t i = 0; i < corpus; ++i) {
    DocDraft d;
    d.bucket = static_cast<int64_t>(rng.uniform_int(8));
    d.vec.resize(spec.dim);
    for (int j = 0; j < spec.dim; ++j)
      d.vec[j] = static_cast<float>(rng.normal());
    int64_t slot = i / spec.relevant_per_query;
    if (slot < spec.n_queries) {
      int j = static_cast<int>(i % spec.relevant_per_query);
      int level = spec.levels - 1 - (j % (spec.levels - 1));
      d.query = slot;
      d.level = level;
      d.text = draw_text(rng, qpools[static_cast<size_t>(slot)]);
      float scale = spec.cluster_separation * level / (spec.levels - 1);
      for (int k = 0; k < spec.dim; ++k)
        d.vec[k] += scale * dirs[static_cast<size_t>(slot)](k);
    } else {
      d.text = draw_text(rng, background);
    }
    docs.push_back(std::move(d));
  }

  SynthData out = assemble(spec, std::move(docs), rng, true);
  for (int q = 0; q < spec.n_queries; ++q) {
    SynthQuery sq;
    sq.id = q;
    sq.text = draw_text(rng, qpools[static_cast<size_t>(q)]);
    sq.embedding.assign(dirs[static_cast<size_t>(q)].data(),
                        dirs[static_cast<size_t>(q)].data() + spec.dim);
    out.queries.push_back(std::move(sq));
  }
  return out;
}

std::string serialize_gold(const SynthData& d) {
  std::string out;
  for (size_t i = 0; i < d.gold.size(); ++i) {
    json obj = {{"id", d.table.id_at(i)}, {"label", d.gold[i]}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::string serialize_qrels(const SynthData& d) {
  std::string out;
  for (const auto& [qid, docs] : d.qrels) {
    for (const auto& [did, level] : docs) {
      json obj = {{"doc_id", did}, {"level", level}, {"query_id", qid}};
      out += obj.dump();
      out += '\n';
    }
  }
  return out;
}

std::string serialize_queries(const SynthData& d) {
  std::string out;
  for (const SynthQuery& q : d.queries) {
    json arr = json::array();
    for (float v : q.embedding) arr.push_back(v);
    json obj = {{"id", q.id}, {"text", q.text}, {"vec", std::move(arr)}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::map<int64_t, int> load_gold(const std::string& path) {
  std::map<int64_t, int> out;
  for_each_jsonl(path, [&](size_t line_no, const json& obj) {
    if (!obj.contains("id") || !obj.contains("label") ||
        !obj["id"].is_number_integer() || !obj["label"].is_number_integer())
      throw DataError("malformed gold record on line " +
                      std::to_string(line_no));
    out[obj["id"].get<int64_t>()] = obj["label"].get<int>();
  });
  return out;
}

std::map<int64_t, std::map<int64_t, int>> load_qrels(
    const std::string& path) {
  std::map<int64_t, std::map<int64_t, int>> out;
  for_each_jsonl(path, [&](size_t line_no, const json& obj) {
    if (!obj.contains("query_id") || !obj.contains("doc_id") ||
        !obj.contains("level") || !obj["query_id"].is_number_integer() ||
        !obj["doc_id"].is_number_integer() ||
        !obj["level"].is_number_integer())
      throw DataError("malformed qrels record on line " +
                      std::to_string(line_no));
    out[obj["query_id"].get<int64_t>()][obj["doc_id"].get<int64_t>()] =
        obj["level"].get<int>();
  });
  return out;
}

std::vector<SynthQuery> load_queries(const std::string& path) {
  std::vector<SynthQuery> out;
  for_each_jsonl(path, [&](size_t line_no, const json& obj) {
    if (!obj.contains("id") || !obj.contains("text") ||
        !obj["id"].is_number_integer() || !obj["text"].is_string())
      throw DataError("malformed query record on line " +
                      std::to_string(line_no));
    SynthQuery q;
    q.id = obj["id"].get<int64_t>();
    q.text = obj["text"].get<std::string>();
    if (obj.contains("vec")) {
      if (!obj["vec"].is_array())
        throw DataError("malformed query vector on line " +
                        std::to_string(line_no));
      for (const auto& v : obj["vec"]) q.embedding.push_back(v.get<float>());
    }
    out.push_back(std::move(q));
  });
  return out;
}

}  // namespace proxyq

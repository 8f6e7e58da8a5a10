#pragma once

// Dataset model and file formats for i-vector language identification, plus
// the synthetic Gaussian-cluster generator that stands in for the challenge
// data.
//
// CSV formats (UTF-8, '.' decimal point, no header):
//   labeled   : id,label,v1,...,vd     label is a class-name string
//   unlabeled : id,v1,...,vd
//   class list: one name per line; order defines class ids 0..k-1
//   truth     : id,name                name may be "oos"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lid/error.hpp"
#include "lid/matrix.hpp"
#include "lid/training.hpp"

namespace lid {

inline constexpr const char* kOosName = "oos";

struct LabeledExample {
  std::string id;
  std::vector<double> x;
  size_t class_id = 0;
};

struct UnlabeledExample {
  std::string id;
  std::vector<double> x;
};

struct IvectorDataset {
  size_t dim = 0;
  std::vector<LabeledExample> labeled;
  std::vector<UnlabeledExample> unlabeled;
  std::vector<std::string> class_names;  // k in-set names; oos id == k

  size_t k() const { return class_names.size(); }
  size_t oos_id() const { return class_names.size(); }

  void validate() const {
    std::unordered_set<std::string> ids;
    auto check_id = [&](const std::string& id) {
      if (!ids.insert(id).second) throw DataError("duplicate example id '" + id + "'");
    };
    for (const auto& e : labeled) {
      check_id(e.id);
      if (e.x.size() != dim) throw DataError("example '" + e.id + "' has wrong dimension");
      if (e.class_id >= k()) throw DataError("example '" + e.id + "' has invalid class id");
    }
    for (const auto& e : unlabeled) {
      check_id(e.id);
      if (e.x.size() != dim) throw DataError("example '" + e.id + "' has wrong dimension");
    }
  }
};

// ---- low-level text helpers ----

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& field, const std::string& where) {
  std::string t = trim(field);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw DataError(where + ": non-numeric field '" + field + "'");
  return v;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  return f;
}

}  // namespace detail

// ---- class list ----

inline std::vector<std::string> load_class_list(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open class list '" + path + "'");
  std::vector<std::string> names;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string name = detail::trim(line);
    if (name.empty()) continue;
    if (name == kOosName)
      throw DataError(path + ":" + std::to_string(lineno) + ": '" + kOosName +
                      "' is reserved for the out-of-set class");
    if (!seen.insert(name).second)
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate class '" + name + "'");
    names.push_back(name);
  }
  return names;
}

inline void write_class_list(const std::string& path, const std::vector<std::string>& names) {
  auto f = detail::open_out(path);
  for (const auto& n : names) f << n << "\n";
}

// ---- i-vector CSV ----

// Parses one CSV file into a dataset part. Dimension is inferred from the
// first row and enforced on every following row. An empty file yields an
// empty dataset.
inline IvectorDataset load_ivectors(const std::string& path, bool has_labels,
                                    const std::vector<std::string>& class_names = {}) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::unordered_map<std::string, size_t> class_ids;
  for (size_t i = 0; i < class_names.size(); ++i) class_ids[class_names[i]] = i;

  IvectorDataset ds;
  ds.class_names = class_names;
  std::unordered_set<std::string> ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto fields = detail::split(line, ',');
    const size_t meta = has_labels ? 2 : 1;
    if (fields.size() < meta + 1) throw DataError(where + ": too few fields");
    size_t row_dim = fields.size() - meta;
    if (ds.dim == 0)
      ds.dim = row_dim;
    else if (row_dim != ds.dim)
      throw DataError(where + ": expected " + std::to_string(ds.dim) + " values, got " +
                      std::to_string(row_dim));
    std::string id = detail::trim(fields[0]);
    if (id.empty()) throw DataError(where + ": empty id");
    if (!ids.insert(id).second) throw DataError(where + ": duplicate id '" + id + "'");

    std::vector<double> x(row_dim);
    for (size_t j = 0; j < row_dim; ++j) x[j] = detail::parse_double(fields[meta + j], where);

    if (has_labels) {
      std::string label = detail::trim(fields[1]);
      auto it = class_ids.find(label);
      if (it == class_ids.end()) throw DataError(where + ": unknown class '" + label + "'");
      ds.labeled.push_back({std::move(id), std::move(x), it->second});
    } else {
      ds.unlabeled.push_back({std::move(id), std::move(x)});
    }
  }
  return ds;
}

inline void write_labeled_csv(const std::string& path, const std::vector<LabeledExample>& rows,
                              const std::vector<std::string>& class_names) {
  auto f = detail::open_out(path);
  for (const auto& e : rows) {
    f << e.id << ',' << class_names[e.class_id];
    for (double v : e.x) f << ',' << detail::format_double(v);
    f << '\n';
  }
}

inline void write_unlabeled_csv(const std::string& path,
                                const std::vector<UnlabeledExample>& rows) {
  auto f = detail::open_out(path);
  for (const auto& e : rows) {
    f << e.id;
    for (double v : e.x) f << ',' << detail::format_double(v);
    f << '\n';
  }
}

// Truth rows are `id,name`; out-of-set rows use the reserved name.
inline void write_truth_csv(const std::string& path, const std::vector<UnlabeledExample>& rows,
                            const std::vector<size_t>& truth,
                            const std::vector<std::string>& class_names, bool append = false) {
  std::ofstream f(path, append ? std::ios::app : std::ios::out);
  if (!f) throw DataError("cannot write '" + path + "'");
  for (size_t i = 0; i < rows.size(); ++i) {
    const std::string& name =
        truth[i] < class_names.size() ? class_names[truth[i]] : std::string(kOosName);
    f << rows[i].id << ',' << name << '\n';
  }
}

// Loads `id,name` truth rows; names resolve against class_names, the
// reserved oos name maps to id k.
inline std::unordered_map<std::string, size_t> load_truth_csv(
    const std::string& path, const std::vector<std::string>& class_names) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open truth file '" + path + "'");
  std::unordered_map<std::string, size_t> class_ids;
  for (size_t i = 0; i < class_names.size(); ++i) class_ids[class_names[i]] = i;
  std::unordered_map<std::string, size_t> truth;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto fields = detail::split(line, ',');
    if (fields.size() != 2) throw DataError(where + ": want 'id,name'");
    std::string id = detail::trim(fields[0]), name = detail::trim(fields[1]);
    size_t cls;
    if (name == kOosName) {
      cls = class_names.size();
    } else {
      auto it = class_ids.find(name);
      if (it == class_ids.end()) throw DataError(where + ": unknown class '" + name + "'");
      cls = it->second;
    }
    if (!truth.emplace(id, cls).second) throw DataError(where + ": duplicate id '" + id + "'");
  }
  return truth;
}

// ---- synthetic data ----

struct SynthSpec {
  size_t k = 10;                  // in-set languages
  size_t oos_langs = 3;           // hidden out-of-set languages
  size_t dim = 20;
  size_t labeled_per_class = 20;  // labeled examples per in-set language
  size_t n_unlabeled = 2000;
  size_t n_test = 1000;
  double p_oos = 0.23;            // oos rate in unlabeled and test sets
  double cluster_sep = 1.0;       // stddev of the centroid distribution
  double cluster_std = 1.0;       // per-cluster sample stddev
  uint64_t seed = 1;
};

struct SynthData {
  IvectorDataset dataset;              // labeled (in-set only) + unlabeled
  std::vector<UnlabeledExample> test;
  std::vector<size_t> truth_unlabeled;  // oos rows carry id k
  std::vector<size_t> truth_test;
  Matrix centroids;                     // (k + oos_langs) x dim
};

inline SynthData synth_generate(const SynthSpec& spec) {
  if (spec.k == 0 || spec.dim == 0) throw ConfigError("synth: k and dim must be positive");
  if (spec.p_oos < 0 || spec.p_oos > 1) throw ConfigError("synth: p_oos must be in [0,1]");
  if (spec.p_oos > 0 && spec.oos_langs == 0)
    throw ConfigError("synth: p_oos > 0 needs at least one oos language");

  Rng master(spec.seed);
  Rng centroid_rng = master.derive(1);
  Rng labeled_rng = master.derive(2);
  Rng unlabeled_rng = master.derive(3);
  Rng test_rng = master.derive(4);

  SynthData out;
  const size_t total_langs = spec.k + spec.oos_langs;
  out.centroids = sample_gaussian(centroid_rng, total_langs, spec.dim, spec.cluster_sep);

  char name[16];
  for (size_t c = 0; c < spec.k; ++c) {
    std::snprintf(name, sizeof(name), "lang%02zu", c);
    out.dataset.class_names.push_back(name);
  }
  out.dataset.dim = spec.dim;

  auto sample_from = [&](Rng& rng, size_t lang) {
    std::vector<double> x(spec.dim);
    for (size_t j = 0; j < spec.dim; ++j)
      x[j] = out.centroids(lang, j) + rng.gaussian(spec.cluster_std);
    return x;
  };
  auto draw_mixture_lang = [&](Rng& rng) -> size_t {
    if (spec.p_oos > 0 && rng.uniform01() < spec.p_oos)
      return spec.k + rng.below(spec.oos_langs);
    return rng.below(spec.k);
  };

  char id[24];
  for (size_t c = 0; c < spec.k; ++c)
    for (size_t i = 0; i < spec.labeled_per_class; ++i) {
      std::snprintf(id, sizeof(id), "lab-%06zu", c * spec.labeled_per_class + i);
      out.dataset.labeled.push_back({id, sample_from(labeled_rng, c), c});
    }
  for (size_t i = 0; i < spec.n_unlabeled; ++i) {
    size_t lang = draw_mixture_lang(unlabeled_rng);
    std::snprintf(id, sizeof(id), "unl-%06zu", i);
    out.dataset.unlabeled.push_back({id, sample_from(unlabeled_rng, lang)});
    out.truth_unlabeled.push_back(std::min(lang, spec.k));
  }
  for (size_t i = 0; i < spec.n_test; ++i) {
    size_t lang = draw_mixture_lang(test_rng);
    std::snprintf(id, sizeof(id), "tst-%06zu", i);
    out.test.push_back({id, sample_from(test_rng, lang)});
    out.truth_test.push_back(std::min(lang, spec.k));
  }
  out.dataset.validate();
  return out;
}

// ---- conversions into training inputs ----

inline Matrix examples_to_matrix(const std::vector<UnlabeledExample>& rows, size_t dim) {
  Matrix m(rows.size(), dim);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < dim; ++j) m(i, j) = rows[i].x[j];
  return m;
}

inline TrainData to_train_data(const IvectorDataset& ds) {
  TrainData d;
  d.labeled_x = Matrix(ds.labeled.size(), ds.dim);
  for (size_t i = 0; i < ds.labeled.size(); ++i) {
    d.labels.push_back(ds.labeled[i].class_id);
    for (size_t j = 0; j < ds.dim; ++j) d.labeled_x(i, j) = ds.labeled[i].x[j];
  }
  d.unlabeled_x = examples_to_matrix(ds.unlabeled, ds.dim);
  return d;
}

}  // namespace lid

#pragma once

// Flat key-value run configuration. Defaults reproduce the reference setup:
// layers 400/500/500/500/100/51, sigma 0.5, batch 1024, epochs 1000,
// lambda (1,1,0.3,0.3,0.3,0.3), C1 weight 1, C2 weight alpha 0.15. Unknown
// keys are rejected; CLI flags override file values.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lid/crossval.hpp"
#include "lid/data.hpp"
#include "lid/error.hpp"
#include "lid/training.hpp"

namespace lid {

struct RunConfig {
  // network
  std::vector<size_t> layers{400, 500, 500, 500, 100, 51};
  double noise_sigma = 0.5;
  std::vector<double> lambda{1, 1, 0.3, 0.3, 0.3, 0.3};
  std::vector<size_t> lateral_layers{0};
  double bn_momentum = 0.99;
  // objective
  double alpha = 0.15;
  double p_oos = 0.23;
  double entropy_weight = 0.0;
  bool entropy_on_clean = false;
  bool c2_on_clean = false;
  // training
  size_t epochs = 1000;
  size_t batch_size = 1024;
  uint64_t seed = 42;
  std::string batch_policy = "proportional";  // proportional | fixed
  size_t labeled_per_batch = 0;
  double learning_rate = 0.002;
  size_t early_stop_patience = 0;
  // cross-validation
  size_t cv_inset = 38;
  size_t cv_oos = 12;
  size_t cv_repeats = 5;
  uint64_t cv_seed = 7;
  double cv_train_fraction = 2.0 / 3.0;
  std::vector<double> tune_alphas{0.0, 0.15};
  // synthetic data
  size_t synth_k = 10;
  size_t synth_oos_langs = 3;
  size_t synth_dim = 20;
  size_t synth_labeled_per_class = 20;
  size_t synth_unlabeled = 2000;
  size_t synth_test = 1000;
  double synth_p_oos = 0.23;
  double synth_cluster_sep = 1.0;
  double synth_cluster_std = 1.0;
  // paths
  std::string path_labeled, path_unlabeled, path_test, path_truth, path_classes;
  std::string path_model, path_out_dir, path_metrics, path_report, path_predictions;

  void apply(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;

  LadderConfig ladder() const {
    LadderConfig cfg;
    cfg.layer_sizes = layers;
    cfg.noise_sigma = noise_sigma;
    cfg.lambda = lambda;
    cfg.lateral_layers = std::set<size_t>(lateral_layers.begin(), lateral_layers.end());
    return cfg;
  }

  ObjectiveConfig objective() const {
    ObjectiveConfig obj;
    obj.alpha = alpha;
    obj.p_oos = p_oos;
    obj.entropy_weight = entropy_weight;
    obj.entropy_on_clean = entropy_on_clean;
    obj.c2_on_clean = c2_on_clean;
    return obj;
  }

  TrainSchedule schedule() const {
    TrainSchedule s;
    s.epochs = epochs;
    s.batch_size = batch_size;
    s.policy = batch_policy == "fixed" ? BatchPolicy::kFixedCount : BatchPolicy::kProportional;
    s.labeled_per_batch = labeled_per_batch;
    s.early_stop_patience = early_stop_patience;
    s.bn_momentum = bn_momentum;
    return s;
  }

  SplitSpec split() const {
    SplitSpec s;
    s.n_inset = cv_inset;
    s.n_oos = cv_oos;
    s.repeats = cv_repeats;
    s.seed = cv_seed;
    s.train_fraction = cv_train_fraction;
    return s;
  }

  SynthSpec synth() const {
    SynthSpec s;
    s.k = synth_k;
    s.oos_langs = synth_oos_langs;
    s.dim = synth_dim;
    s.labeled_per_class = synth_labeled_per_class;
    s.n_unlabeled = synth_unlabeled;
    s.n_test = synth_test;
    s.p_oos = synth_p_oos;
    s.cluster_sep = synth_cluster_sep;
    s.cluster_std = synth_cluster_std;
    s.seed = seed;
    return s;
  }
};

namespace confkey {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": invalid number '" + v + "'");
  }
}

inline uint64_t to_count(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<uint64_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(key + ": invalid count '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": invalid boolean '" + v + "'");
}

template <class T, class Fn>
std::vector<T> to_list(const std::string& key, const std::string& v, Fn parse_one) {
  std::vector<T> out;
  for (const std::string& item : detail::split(v, ','))
    out.push_back(parse_one(key, detail::trim(item)));
  return out;
}

inline std::string join_counts(const std::vector<size_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + detail::format_double(v[i]);
  return s;
}

}  // namespace confkey

inline void RunConfig::apply(const std::string& key, const std::string& value) {
  using namespace confkey;
  auto counts = [&](const std::string& v) {
    return to_list<size_t>(key, v, [](const std::string& k, const std::string& s) {
      return static_cast<size_t>(to_count(k, s));
    });
  };
  auto doubles = [&](const std::string& v) {
    return to_list<double>(key, v, [](const std::string& k, const std::string& s) {
      return to_double(k, s);
    });
  };

  if (key == "layers") layers = counts(value);
  else if (key == "noise_sigma") noise_sigma = to_double(key, value);
  else if (key == "lambda") lambda = doubles(value);
  else if (key == "lateral_layers") lateral_layers = value.empty() ? std::vector<size_t>{} : counts(value);
  else if (key == "bn_momentum") bn_momentum = to_double(key, value);
  else if (key == "alpha") alpha = to_double(key, value);
  else if (key == "p_oos") p_oos = to_double(key, value);
  else if (key == "entropy_weight") entropy_weight = to_double(key, value);
  else if (key == "entropy_on_clean") entropy_on_clean = to_bool(key, value);
  else if (key == "c2_on_clean") c2_on_clean = to_bool(key, value);
  else if (key == "epochs") epochs = to_count(key, value);
  else if (key == "batch_size") batch_size = to_count(key, value);
  else if (key == "seed") seed = to_count(key, value);
  else if (key == "batch_policy") {
    if (value != "proportional" && value != "fixed")
      throw ConfigError("batch_policy: want 'proportional' or 'fixed', got '" + value + "'");
    batch_policy = value;
  }
  else if (key == "labeled_per_batch") labeled_per_batch = to_count(key, value);
  else if (key == "learning_rate") learning_rate = to_double(key, value);
  else if (key == "early_stop_patience") early_stop_patience = to_count(key, value);
  else if (key == "cv_inset") cv_inset = to_count(key, value);
  else if (key == "cv_oos") cv_oos = to_count(key, value);
  else if (key == "cv_repeats") cv_repeats = to_count(key, value);
  else if (key == "cv_seed") cv_seed = to_count(key, value);
  else if (key == "cv_train_fraction") cv_train_fraction = to_double(key, value);
  else if (key == "tune_alphas") tune_alphas = doubles(value);
  else if (key == "synth_k") synth_k = to_count(key, value);
  else if (key == "synth_oos_langs") synth_oos_langs = to_count(key, value);
  else if (key == "synth_dim") synth_dim = to_count(key, value);
  else if (key == "synth_labeled_per_class") synth_labeled_per_class = to_count(key, value);
  else if (key == "synth_unlabeled") synth_unlabeled = to_count(key, value);
  else if (key == "synth_test") synth_test = to_count(key, value);
  else if (key == "synth_p_oos") synth_p_oos = to_double(key, value);
  else if (key == "synth_cluster_sep") synth_cluster_sep = to_double(key, value);
  else if (key == "synth_cluster_std") synth_cluster_std = to_double(key, value);
  else if (key == "path_labeled") path_labeled = value;
  else if (key == "path_unlabeled") path_unlabeled = value;
  else if (key == "path_test") path_test = value;
  else if (key == "path_truth") path_truth = value;
  else if (key == "path_classes") path_classes = value;
  else if (key == "path_model") path_model = value;
  else if (key == "path_out_dir") path_out_dir = value;
  else if (key == "path_metrics") path_metrics = value;
  else if (key == "path_report") path_report = value;
  else if (key == "path_predictions") path_predictions = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::map<std::string, std::string> RunConfig::to_map() const {
  using namespace confkey;
  std::map<std::string, std::string> m;
  m["layers"] = join_counts(layers);
  m["noise_sigma"] = detail::format_double(noise_sigma);
  m["lambda"] = join_doubles(lambda);
  m["lateral_layers"] = join_counts(lateral_layers);
  m["bn_momentum"] = detail::format_double(bn_momentum);
  m["alpha"] = detail::format_double(alpha);
  m["p_oos"] = detail::format_double(p_oos);
  m["entropy_weight"] = detail::format_double(entropy_weight);
  m["entropy_on_clean"] = entropy_on_clean ? "true" : "false";
  m["c2_on_clean"] = c2_on_clean ? "true" : "false";
  m["epochs"] = std::to_string(epochs);
  m["batch_size"] = std::to_string(batch_size);
  m["seed"] = std::to_string(seed);
  m["batch_policy"] = batch_policy;
  m["labeled_per_batch"] = std::to_string(labeled_per_batch);
  m["learning_rate"] = detail::format_double(learning_rate);
  m["early_stop_patience"] = std::to_string(early_stop_patience);
  m["cv_inset"] = std::to_string(cv_inset);
  m["cv_oos"] = std::to_string(cv_oos);
  m["cv_repeats"] = std::to_string(cv_repeats);
  m["cv_seed"] = std::to_string(cv_seed);
  m["cv_train_fraction"] = detail::format_double(cv_train_fraction);
  m["tune_alphas"] = join_doubles(tune_alphas);
  m["synth_k"] = std::to_string(synth_k);
  m["synth_oos_langs"] = std::to_string(synth_oos_langs);
  m["synth_dim"] = std::to_string(synth_dim);
  m["synth_labeled_per_class"] = std::to_string(synth_labeled_per_class);
  m["synth_unlabeled"] = std::to_string(synth_unlabeled);
  m["synth_test"] = std::to_string(synth_test);
  m["synth_p_oos"] = detail::format_double(synth_p_oos);
  m["synth_cluster_sep"] = detail::format_double(synth_cluster_sep);
  m["synth_cluster_std"] = detail::format_double(synth_cluster_std);
  m["path_labeled"] = path_labeled;
  m["path_unlabeled"] = path_unlabeled;
  m["path_test"] = path_test;
  m["path_truth"] = path_truth;
  m["path_classes"] = path_classes;
  m["path_model"] = path_model;
  m["path_out_dir"] = path_out_dir;
  m["path_metrics"] = path_metrics;
  m["path_report"] = path_report;
  m["path_predictions"] = path_predictions;
  return m;
}

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
inline void parse_config_text(RunConfig& cfg, std::istream& in, const std::string& where) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ":" + std::to_string(lineno) + ": want 'key = value'");
    cfg.apply(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  RunConfig cfg;
  parse_config_text(cfg, f, path);
  return cfg;
}

// Applies a `key=value` command-line override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': want key=value");
  cfg.apply(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline void write_config(const RunConfig& cfg, std::ostream& out) {
  for (const auto& [k, v] : cfg.to_map()) out << k << " = " << v << "\n";
}

}  // namespace lid

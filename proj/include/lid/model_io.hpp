#pragma once

// Versioned text container for trained models: network shape, class names,
// every parameter matrix with a shape header, and the batch-norm running
// statistics. Values use shortest round-trip formatting, so a save/load
// cycle is bit-exact.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lid/config.hpp"
#include "lid/data.hpp"
#include "lid/ladder.hpp"

namespace lid {

struct Model {
  LadderConfig config;
  LadderParams params;
  BatchNormState bn;
  std::vector<std::string> class_names;
};

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write model '" + path + "'");
  f << "lidnet-model 1\n";
  f << "layers " << confkey::join_counts(m.config.layer_sizes) << "\n";
  std::vector<size_t> lateral(m.config.lateral_layers.begin(), m.config.lateral_layers.end());
  f << "lateral " << confkey::join_counts(lateral) << "\n";
  f << "noise_sigma " << detail::format_double(m.config.noise_sigma) << "\n";
  f << "lambda " << confkey::join_doubles(m.config.lambda) << "\n";
  f << "bn_momentum " << detail::format_double(m.bn.momentum) << "\n";
  f << "classes " << m.class_names.size() << "\n";
  for (const auto& n : m.class_names) f << n << "\n";
  for_each_param(const_cast<LadderParams&>(m.params), [&](const std::string& name, Matrix& mat) {
    f << "param " << name << " " << mat.rows() << " " << mat.cols() << "\n";
    for (size_t i = 0; i < mat.rows(); ++i) {
      for (size_t j = 0; j < mat.cols(); ++j)
        f << (j ? " " : "") << detail::format_double(mat(i, j));
      f << "\n";
    }
  });
  for (size_t l = 0; l < m.bn.running_mean.size(); ++l) {
    f << "running_mean " << l;
    for (size_t j = 0; j < m.bn.running_mean[l].cols(); ++j)
      f << " " << detail::format_double(m.bn.running_mean[l](0, j));
    f << "\nrunning_var " << l;
    for (size_t j = 0; j < m.bn.running_var[l].cols(); ++j)
      f << " " << detail::format_double(m.bn.running_var[l](0, j));
    f << "\n";
  }
  f << "end\n";
  if (!f) throw DataError("failed writing model '" + path + "'");
}

namespace detail {

inline std::string next_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": truncated model file");
  return line;
}

}  // namespace detail

inline Model load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open model '" + path + "'");
  auto expect_key = [&](const std::string& line, const std::string& key) {
    if (line.rfind(key + " ", 0) != 0)
      throw DataError(path + ": expected '" + key + "', got '" + line + "'");
    return detail::trim(line.substr(key.size() + 1));
  };

  Model m;
  if (detail::next_line(f, path) != "lidnet-model 1")
    throw DataError(path + ": not a lidnet model file");
  auto counts = [&](const std::string& key, const std::string& v) {
    return confkey::to_list<size_t>(key, v, [](const std::string& k, const std::string& s) {
      return static_cast<size_t>(confkey::to_count(k, s));
    });
  };
  m.config.layer_sizes = counts("layers", expect_key(detail::next_line(f, path), "layers"));
  std::string lateral = expect_key(detail::next_line(f, path), "lateral");
  if (!lateral.empty())
    for (size_t l : counts("lateral", lateral)) m.config.lateral_layers.insert(l);
  else
    m.config.lateral_layers.clear();
  m.config.noise_sigma =
      confkey::to_double("noise_sigma", expect_key(detail::next_line(f, path), "noise_sigma"));
  m.config.lambda = confkey::to_list<double>(
      "lambda", expect_key(detail::next_line(f, path), "lambda"),
      [](const std::string& k, const std::string& s) { return confkey::to_double(k, s); });
  m.bn.momentum =
      confkey::to_double("bn_momentum", expect_key(detail::next_line(f, path), "bn_momentum"));
  size_t n_classes =
      confkey::to_count("classes", expect_key(detail::next_line(f, path), "classes"));
  for (size_t i = 0; i < n_classes; ++i)
    m.class_names.push_back(detail::trim(detail::next_line(f, path)));
  m.config.validate();

  Rng dummy(0);
  m.params = init_params(m.config, dummy);  // correct shapes, overwritten below
  m.bn.running_mean.clear();
  m.bn.running_var.clear();
  for (size_t w : m.config.layer_sizes) {
    m.bn.running_mean.push_back(Matrix(1, w));
    m.bn.running_var.push_back(Matrix(1, w, 1.0));
  }

  std::vector<std::pair<std::string, Matrix*>> by_name;
  for_each_param(m.params,
                 [&](const std::string& n, Matrix& mat) { by_name.push_back({n, &mat}); });

  std::string line;
  while (std::getline(f, line)) {
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t == "end") return m;
    std::istringstream head(t);
    std::string tag;
    head >> tag;
    if (tag == "param") {
      std::string name;
      size_t rows = 0, cols = 0;
      head >> name >> rows >> cols;
      Matrix* dst = nullptr;
      for (auto& [n, mat] : by_name)
        if (n == name) dst = mat;
      if (!dst) throw DataError(path + ": unknown parameter '" + name + "'");
      if (dst->rows() != rows || dst->cols() != cols)
        throw DataError(path + ": parameter '" + name + "' has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                        dst->shape_str());
      for (size_t i = 0; i < rows; ++i) {
        std::istringstream row(detail::next_line(f, path));
        for (size_t j = 0; j < cols; ++j)
          if (!(row >> (*dst)(i, j)))
            throw DataError(path + ": short row in parameter '" + name + "'");
      }
    } else if (tag == "running_mean" || tag == "running_var") {
      size_t l = 0;
      head >> l;
      if (l >= m.config.layer_sizes.size()) throw DataError(path + ": bad layer index");
      Matrix& dst = tag == "running_mean" ? m.bn.running_mean[l] : m.bn.running_var[l];
      for (size_t j = 0; j < dst.cols(); ++j)
        if (!(head >> dst(0, j))) throw DataError(path + ": short " + tag + " row");
    } else {
      throw DataError(path + ": unexpected line '" + t + "'");
    }
  }
  throw DataError(path + ": missing 'end' marker");
}

}  // namespace lid

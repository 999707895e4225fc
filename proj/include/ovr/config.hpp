#pragma once

// Experiment configuration and its textual format.
//
// Grammar (one item per line, '#' or ';' starts a comment):
//
//   [section]
//   key = value
//
// Values are typed per key (integer, real, boolean, enum, path); see
// set_field() for the full key list. A [sweep] section lists grid axes as
//   section.key = v1, v2, v3
// and the grid is their cartesian product, in file order.

#include "ovr/common.hpp"
#include "ovr/evaluation.hpp"
#include "ovr/network.hpp"
#include "ovr/ovr_encoder.hpp"
#include "ovr/regularizers.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ovr {

enum class ModelKind { mlp, autoencoder, denoising_autoencoder, ovr_encoder, kmeans, logistic_only };

inline std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::autoencoder: return "autoencoder";
    case ModelKind::denoising_autoencoder: return "denoising_autoencoder";
    case ModelKind::ovr_encoder: return "ovr_encoder";
    case ModelKind::kmeans: return "kmeans";
    case ModelKind::logistic_only: return "logistic_only";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "autoencoder" || s == "ae") return ModelKind::autoencoder;
  if (s == "denoising_autoencoder" || s == "dae") return ModelKind::denoising_autoencoder;
  if (s == "ovr_encoder") return ModelKind::ovr_encoder;
  if (s == "kmeans") return ModelKind::kmeans;
  if (s == "logistic_only") return ModelKind::logistic_only;
  throw InvalidArgument("unknown model '" + std::string(s) + "'");
}

enum class DatasetKind { sphere, cifar10 };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::sphere;
  // sphere
  int m_sectors = 8;
  int n_cuts = 4;
  int num_classes = 10;
  int num_points = 5000;
  double val_fraction = 0.2;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  // cifar10
  std::string path;
  int pca_dims = 256;
  int train_limit = 0;  // 0 = all 50000
  int test_limit = 0;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::mlp;
  DatasetConfig dataset;
  int hidden_units = 64;
  Activation activation = Activation::relu;
  RegConfig reg;                      // reg.row_normalize is resolved by effective_reg()
  std::optional<bool> row_normalize;  // unset: on for mlp/autoencoders, off for ovr_encoder
  double input_dropout = 0.0;
  double hidden_dropout = 0.0;
  bool tied = false;
  UpdateRule update_rule = UpdateRule::paper_local;
  bool use_bias = true;
  bool use_activity_term = true;
  bool use_adam = true;
  KMeansEncoding kmeans_encoding = KMeansEncoding::triangle;
  int kmeans_epochs = 10;
  double lr = 1e-3;
  int epochs = 75;
  int batch_size = 128;
  bool plateau = true;
  std::uint64_t seed = 0;
  std::optional<double> tau;  // sparsity threshold; default by activation
  int probe_epochs = 100;
  double probe_lr = 1e-3;
  // outputs
  std::string csv = "results.csv";
  std::string checkpoint;  // empty = none
  std::string pca_out;     // cifar10: where to save the fitted PCA model
};

struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline long long parse_int(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(where + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(where + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out))
    throw ConfigError(where + ": expected a real number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

inline int parse_positive(const std::string& v, const std::string& where) {
  const long long x = parse_int(v, where);
  if (x <= 0 || x > 1'000'000'000) throw ConfigError(where + ": expected a positive integer, got '" + v + "'");
  return static_cast<int>(x);
}

inline int parse_non_negative(const std::string& v, const std::string& where) {
  const long long x = parse_int(v, where);
  if (x < 0 || x > 1'000'000'000) throw ConfigError(where + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<int>(x);
}

template <typename F>
auto parse_enum(F&& f, const std::string& v, const std::string& where) {
  try {
    return f(v);
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

// Sets one "section.key" field. `where` prefixes error messages (file:line).
inline void set_field(ExperimentConfig& c, const std::string& key, const std::string& value,
                      const std::string& where = "config") {
  using namespace detail;
  const std::string at = where + ": field '" + key + "'";
  auto& d = c.dataset;
  if (key == "run.model") c.model = parse_enum(parse_model_kind, value, at);
  else if (key == "run.seed") c.seed = parse_u64(value, at);
  else if (key == "run.epochs") c.epochs = parse_positive(value, at);
  else if (key == "run.batch_size") c.batch_size = parse_positive(value, at);
  else if (key == "run.lr") c.lr = parse_real(value, at);
  else if (key == "run.plateau") c.plateau = parse_bool(value, at);
  else if (key == "run.tau") c.tau = parse_real(value, at);
  else if (key == "run.probe_epochs") c.probe_epochs = parse_positive(value, at);
  else if (key == "run.probe_lr") c.probe_lr = parse_real(value, at);
  else if (key == "dataset.kind") {
    if (value == "sphere") d.kind = DatasetKind::sphere;
    else if (value == "cifar10") d.kind = DatasetKind::cifar10;
    else throw ConfigError(at + ": unknown dataset kind '" + value + "'");
  }
  else if (key == "dataset.m_sectors") d.m_sectors = parse_positive(value, at);
  else if (key == "dataset.n_cuts") d.n_cuts = parse_non_negative(value, at);
  else if (key == "dataset.num_classes") d.num_classes = parse_positive(value, at);
  else if (key == "dataset.num_points") d.num_points = parse_positive(value, at);
  else if (key == "dataset.val_fraction") d.val_fraction = parse_real(value, at);
  else if (key == "dataset.seed") d.seed = parse_u64(value, at);
  else if (key == "dataset.path") d.path = value;
  else if (key == "dataset.pca_dims") d.pca_dims = parse_positive(value, at);
  else if (key == "dataset.train_limit") d.train_limit = parse_non_negative(value, at);
  else if (key == "dataset.test_limit") d.test_limit = parse_non_negative(value, at);
  else if (key == "model.hidden_units") c.hidden_units = parse_positive(value, at);
  else if (key == "model.activation") c.activation = parse_enum(parse_activation, value, at);
  else if (key == "model.input_dropout") c.input_dropout = parse_real(value, at);
  else if (key == "model.hidden_dropout") c.hidden_dropout = parse_real(value, at);
  else if (key == "model.tied") c.tied = parse_bool(value, at);
  else if (key == "model.update_rule") c.update_rule = parse_enum(parse_update_rule, value, at);
  else if (key == "model.use_bias") c.use_bias = parse_bool(value, at);
  else if (key == "model.use_activity_term") c.use_activity_term = parse_bool(value, at);
  else if (key == "model.optimizer") {
    if (value == "adam") c.use_adam = true;
    else if (value == "sgd") c.use_adam = false;
    else throw ConfigError(at + ": unknown optimizer '" + value + "'");
  }
  else if (key == "model.kmeans_encoding") c.kmeans_encoding = parse_enum(parse_kmeans_encoding, value, at);
  else if (key == "model.kmeans_epochs") c.kmeans_epochs = parse_positive(value, at);
  else if (key == "reg.kind") c.reg.kind = parse_enum(parse_reg_kind, value, at);
  else if (key == "reg.lambda") c.reg.lambda = parse_real(value, at);
  else if (key == "reg.include_diagonal") c.reg.include_diagonal = parse_bool(value, at);
  else if (key == "reg.row_normalize") c.row_normalize = parse_bool(value, at);
  else if (key == "output.csv") c.csv = value;
  else if (key == "output.checkpoint") c.checkpoint = value;
  else if (key == "output.pca") c.pca_out = value;
  else throw ConfigError(where + ": unknown field '" + key + "'");
}

inline RegConfig effective_reg(const ExperimentConfig& c) {
  RegConfig r = c.reg;
  r.row_normalize = c.row_normalize.value_or(c.model != ModelKind::ovr_encoder);
  return r;
}

inline void validate(const ExperimentConfig& c) {
  if (c.reg.lambda < 0) throw ConfigError("config: reg.lambda must be non-negative");
  if (!(c.input_dropout >= 0 && c.input_dropout < 1)) throw ConfigError("config: model.input_dropout must be in [0,1)");
  if (!(c.hidden_dropout >= 0 && c.hidden_dropout < 1))
    throw ConfigError("config: model.hidden_dropout must be in [0,1)");
  if (!(c.lr > 0)) throw ConfigError("config: run.lr must be positive");
  if (c.epochs < 1) throw ConfigError("config: run.epochs must be positive");
  if (c.probe_epochs < 1) throw ConfigError("config: run.probe_epochs must be positive");
  if (c.tau && *c.tau < 0) throw ConfigError("config: run.tau must be non-negative");
  if (!(c.dataset.val_fraction > 0 && c.dataset.val_fraction < 1))
    throw ConfigError("config: dataset.val_fraction must be in (0,1)");
  if (c.dataset.kind == DatasetKind::cifar10 && c.dataset.path.empty())
    throw ConfigError("config: dataset.path is required for cifar10");
}

using Override = std::pair<std::string, std::string>;

struct ParsedConfig {
  ExperimentConfig base;
  std::vector<std::pair<std::string, std::vector<std::string>>> sweep_axes;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline ParsedConfig parse_config(std::istream& is, const std::string& source = "config") {
  ParsedConfig out;
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto hash = line.find_first_of("#;");
    std::string text = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside of any section");
    if (section == "sweep") {
      auto values = split_list(value);
      if (values.empty()) throw ConfigError(where + ": sweep axis '" + key + "' has no values");
      ExperimentConfig probe = out.base;
      for (const auto& v : values) set_field(probe, key, v, where);
      out.sweep_axes.emplace_back(key, std::move(values));
    } else {
      set_field(out.base, section + "." + key, value, where);
    }
  }
  return out;
}

inline ParsedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

// Cartesian product of the sweep axes; a config without axes is one empty cell.
inline std::vector<std::vector<Override>> expand_grid(const ParsedConfig& pc) {
  std::vector<std::vector<Override>> cells{{}};
  for (const auto& [key, values] : pc.sweep_axes) {
    std::vector<std::vector<Override>> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        auto c = cell;
        c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }
  return cells;
}

inline ExperimentConfig apply_overrides(ExperimentConfig c, const std::vector<Override>& overrides,
                                        const std::string& where = "override") {
  for (const auto& [k, v] : overrides) set_field(c, k, v, where);
  return c;
}

// Deterministic dump of every field that affects results (outputs excluded).
inline std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream os;
  auto real = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  const auto& d = c.dataset;
  os << "run.model=" << to_string(c.model) << '\n'
     << "run.seed=" << c.seed << '\n'
     << "run.epochs=" << c.epochs << '\n'
     << "run.batch_size=" << c.batch_size << '\n'
     << "run.lr=" << real(c.lr) << '\n'
     << "run.plateau=" << c.plateau << '\n'
     << "run.tau=" << (c.tau ? real(*c.tau) : "default") << '\n'
     << "run.probe_epochs=" << c.probe_epochs << '\n'
     << "run.probe_lr=" << real(c.probe_lr) << '\n';
  if (d.kind == DatasetKind::sphere) {
    os << "dataset.kind=sphere\n"
       << "dataset.m_sectors=" << d.m_sectors << '\n'
       << "dataset.n_cuts=" << d.n_cuts << '\n'
       << "dataset.num_classes=" << d.num_classes << '\n'
       << "dataset.num_points=" << d.num_points << '\n'
       << "dataset.val_fraction=" << real(d.val_fraction) << '\n'
       << "dataset.seed=" << d.seed.value_or(c.seed) << '\n';
  } else {
    os << "dataset.kind=cifar10\n"
       << "dataset.path=" << d.path << '\n'
       << "dataset.pca_dims=" << d.pca_dims << '\n'
       << "dataset.train_limit=" << d.train_limit << '\n'
       << "dataset.test_limit=" << d.test_limit << '\n';
  }
  os << "model.hidden_units=" << c.hidden_units << '\n'
     << "model.activation=" << to_string(c.activation) << '\n'
     << "model.input_dropout=" << real(c.input_dropout) << '\n'
     << "model.hidden_dropout=" << real(c.hidden_dropout) << '\n'
     << "model.tied=" << c.tied << '\n'
     << "model.update_rule=" << to_string(c.update_rule) << '\n'
     << "model.use_bias=" << c.use_bias << '\n'
     << "model.use_activity_term=" << c.use_activity_term << '\n'
     << "model.optimizer=" << (c.use_adam ? "adam" : "sgd") << '\n'
     << "model.kmeans_encoding=" << (c.kmeans_encoding == KMeansEncoding::triangle ? "triangle" : "hard") << '\n'
     << "model.kmeans_epochs=" << c.kmeans_epochs << '\n'
     << "reg.kind=" << to_string(c.reg.kind) << '\n'
     << "reg.lambda=" << real(c.reg.lambda) << '\n'
     << "reg.include_diagonal=" << c.reg.include_diagonal << '\n'
     << "reg.row_normalize=" << effective_reg(c).row_normalize << '\n'
     << "version=" << kVersion << '\n';
  return os.str();
}

// FNV-1a 64, hex.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ovr

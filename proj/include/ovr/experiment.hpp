#pragma once

// Runs one configured experiment, or a grid of them, and produces run records.

#include "ovr/checkpoint.hpp"
#include "ovr/config.hpp"
#include "ovr/csv.hpp"
#include "ovr/datasets.hpp"
#include "ovr/evaluation.hpp"
#include "ovr/models.hpp"
#include "ovr/ovr_encoder.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

namespace ovr {

struct PreparedData {
  LabeledDataset train;
  LabeledDataset val;
  std::optional<PcaModel> pca;
  std::string label;  // short dataset description for the records
};

// Key identifying everything the prepared data depends on.
inline std::string dataset_key(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  std::ostringstream os;
  if (d.kind == DatasetKind::sphere)
    os << "sphere/" << d.m_sectors << '/' << d.n_cuts << '/' << d.num_classes << '/' << d.num_points << '/'
       << format_double(d.val_fraction) << '/' << d.seed.value_or(c.seed);
  else
    os << "cifar10/" << d.path << '/' << d.pca_dims << '/' << d.train_limit << '/' << d.test_limit;
  return os.str();
}

inline PreparedData prepare_data(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  PreparedData out;
  if (d.kind == DatasetKind::sphere) {
    const int val_points = std::max(1, static_cast<int>(std::lround(d.num_points * d.val_fraction)));
    if (val_points >= d.num_points) throw ConfigError("config: dataset.val_fraction leaves no training points");
    SpherePartitionSpec spec{d.m_sectors, d.n_cuts, d.num_classes, d.num_points, d.seed.value_or(c.seed)};
    const LabeledDataset all = generate_sphere_dataset(spec);
    out.train = slice_rows(all, 0, d.num_points - val_points);
    out.val = slice_rows(all, d.num_points - val_points, d.num_points);
    std::ostringstream label;
    label << "sphere(M=" << d.m_sectors << ",N=" << d.n_cuts << ",C=" << d.num_classes << ")";
    out.label = label.str();
    return out;
  }
  if (!std::filesystem::is_directory(d.path))
    throw FormatError("cifar10: dataset directory '" + d.path + "' does not exist");
  auto [train, test] = load_cifar10(d.path);
  if (d.train_limit > 0 && d.train_limit < train.X.rows()) train = slice_rows(train, 0, d.train_limit);
  if (d.test_limit > 0 && d.test_limit < test.X.rows()) test = slice_rows(test, 0, d.test_limit);
  out.pca = fit_pca(train.X, d.pca_dims);
  out.train = train;
  out.train.X = pca_transform(*out.pca, train.X);
  out.val = test;
  out.val.X = pca_transform(*out.pca, test.X);
  out.label = "cifar10-pca" + std::to_string(d.pca_dims);
  return out;
}

inline double effective_tau(const ExperimentConfig& c) {
  if (c.tau) return *c.tau;
  if (c.model == ModelKind::kmeans) return 1e-6;
  return default_tau(c.activation);
}

inline Checkpoint pca_checkpoint(const PcaModel& m) {
  Checkpoint ck;
  ck.arrays.emplace_back("pca.mean", Matrix(m.mean));
  ck.arrays.emplace_back("pca.components", m.components);
  ck.arrays.emplace_back("pca.variances", Matrix(m.variances));
  ck.hyper["kind"] = "pca";
  return ck;
}

inline PcaModel pca_from(const Checkpoint& ck) {
  PcaModel m;
  m.mean = ck.array("pca.mean").row(0);
  m.components = ck.array("pca.components");
  m.variances = ck.array("pca.variances").col(0);
  if (m.mean.size() != m.components.cols() || m.variances.size() != m.components.rows())
    throw FormatError("checkpoint: inconsistent PCA arrays");
  return m;
}

inline std::string run_id_for(const ExperimentConfig& c, const std::string& hash) {
  return std::string(to_string(c.model)) + "-" + hash.substr(0, 8);
}

namespace detail {

inline double mean_quantization_error(const KMeansModel& km, const Matrix& X) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    total += (km.centroids.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff();
  return total / static_cast<double>(X.rows());
}

// Mean J over the validation set in fixed, unshuffled batches.
inline double encoder_val_cost(const DenseLayer& layer, const Matrix& X, const OvrEncoderConfig& ec) {
  double total = 0.0;
  int batches = 0;
  const Eigen::Index bs = std::min<Eigen::Index>(ec.batch_size, X.rows());
  for (Eigen::Index start = 0; start < X.rows(); start += bs) {
    const Eigen::Index len = std::min(bs, X.rows() - start);
    const Matrix H = encoder_forward(layer, X.middleRows(start, len)).H;
    total += (ec.use_activity_term ? activity_target_loss_grad(H).loss : 0.0) +
             ec.lambda * ovr_loss_grad(ec.row_normalize ? row_normalize(H).Hn : H, ec.include_diagonal).loss;
    ++batches;
  }
  return total / batches;
}

}  // namespace detail

inline OvrEncoderConfig encoder_config(const ExperimentConfig& c) {
  OvrEncoderConfig ec;
  const RegConfig reg = effective_reg(c);
  ec.hidden_units = c.hidden_units;
  ec.lambda = reg.lambda;
  ec.activation = c.activation;
  ec.update_rule = c.update_rule;
  ec.batch_size = c.batch_size;
  ec.lr = c.lr;
  ec.epochs = c.epochs;
  ec.seed = c.seed;
  ec.use_bias = c.use_bias;
  ec.include_diagonal = reg.include_diagonal;
  ec.use_activity_term = c.use_activity_term;
  ec.use_adam = c.use_adam;
  ec.row_normalize = reg.row_normalize;
  return ec;
}

inline TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.hidden_units = c.hidden_units;
  t.activation = c.activation;
  t.reg = effective_reg(c);
  t.input_dropout = c.input_dropout;
  t.hidden_dropout = c.hidden_dropout;
  t.lr = c.lr;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.seed = c.seed;
  t.plateau = c.plateau;
  t.tied = c.tied;
  return t;
}

// Trains the configured model and returns one "epoch" record per training
// epoch (where the model has epochs) followed by one "final" record for the
// selected model. `data` may be supplied to reuse an already prepared dataset.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& c, const PreparedData* data = nullptr) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  std::unique_ptr<PreparedData> owned;
  if (!data) {
    owned = std::make_unique<PreparedData>(prepare_data(c));
    data = owned.get();
  }
  const auto& train = data->train;
  const auto& val = data->val;
  const std::string hash = config_hash(c);
  const double tau = effective_tau(c);
  const RegConfig reg = effective_reg(c);

  RunRecord proto;
  proto.run_id = run_id_for(c, hash);
  proto.config_hash = hash;
  proto.model = std::string(to_string(c.model));
  proto.dataset = data->label;
  proto.hidden = c.model == ModelKind::logistic_only ? 0 : c.hidden_units;
  proto.lambda = reg.kind == RegKind::none && c.model != ModelKind::ovr_encoder ? 0.0 : reg.lambda;
  proto.activation = c.model == ModelKind::logistic_only ? "" : std::string(to_string(c.activation));
  if (c.model == ModelKind::kmeans)
    proto.activation = c.kmeans_encoding == KMeansEncoding::triangle ? "triangle" : "hard";
  proto.seed = c.seed;

  std::vector<RunRecord> out;
  auto epoch_record = [&](int epoch, double train_loss, double val_loss, const Matrix& val_reps, double acc) {
    RunRecord r = proto;
    r.status = "epoch";
    r.epoch = epoch;
    r.train_loss = train_loss;
    r.val_loss = val_loss;
    const SparsityReport sp = sparsity(val_reps, tau);
    r.sparsity = sp.mean_sparsity;
    r.mean_activation = sp.mean_activation;
    r.probe_accuracy = acc;
    r.wall_time_seconds = elapsed();
    out.push_back(r);
  };
  ProbeConfig pc;
  pc.epochs = c.probe_epochs;
  pc.lr = c.probe_lr;
  pc.batch_size = c.batch_size;
  pc.seed = c.seed;
  const int classes = std::max(train.class_count, val.class_count);

  Checkpoint ck;
  ck.hyper["model"] = proto.model;
  ck.hyper["config_hash"] = hash;
  ck.hyper["config"] = canonical_text(c);

  RunRecord fin = proto;
  fin.status = "final";
  const auto nan = std::numeric_limits<double>::quiet_NaN();

  switch (c.model) {
    case ModelKind::mlp: {
      const MlpResult res = train_mlp(train_config(c), train, val, [&](const EpochStats& st, const Mlp& net) {
        epoch_record(st.epoch, st.train_loss, st.val_loss, dense_forward(net.hidden, val.X).H, st.val_accuracy);
      });
      const auto& best = res.history.at(static_cast<std::size_t>(res.best_epoch));
      const SparsityReport sp = sparsity(dense_forward(res.net.hidden, val.X).H, tau);
      fin.epoch = res.best_epoch;
      fin.train_loss = best.train_loss;
      fin.val_loss = best.val_loss;
      fin.sparsity = sp.mean_sparsity;
      fin.mean_activation = sp.mean_activation;
      fin.probe_accuracy = best.val_accuracy;
      add_layer(ck, res.net.hidden, "hidden.");
      add_layer(ck, res.net.output, "output.");
      break;
    }
    case ModelKind::autoencoder:
    case ModelKind::denoising_autoencoder: {
      TrainConfig tc = train_config(c);
      if (c.model == ModelKind::denoising_autoencoder && !(c.input_dropout > 0))
        throw ConfigError("config: denoising_autoencoder needs model.input_dropout > 0");
      if (c.model == ModelKind::autoencoder) tc.input_dropout = 0.0;
      const AutoencoderResult res = train_autoencoder(tc, train, val, [&](const EpochStats& st, const Autoencoder& ae) {
        epoch_record(st.epoch, st.train_loss, st.val_loss, dense_forward(ae.encoder, val.X).H, nan);
      });
      const auto& best = res.history.at(static_cast<std::size_t>(res.best_epoch));
      const Matrix reps = dense_forward(res.net.encoder, train.X).H;
      const Matrix val_reps = dense_forward(res.net.encoder, val.X).H;
      const SparsityReport sp = sparsity(val_reps, tau);
      fin.epoch = res.best_epoch;
      fin.train_loss = best.train_loss;
      fin.val_loss = best.val_loss;
      fin.sparsity = sp.mean_sparsity;
      fin.mean_activation = sp.mean_activation;
      fin.probe_accuracy = train_logistic_probe(reps, train.y, val_reps, val.y, classes, pc);
      add_layer(ck, res.net.encoder, "encoder.");
      add_layer(ck, effective_decoder(res.net), "decoder.");
      break;
    }
    case ModelKind::ovr_encoder: {
      const OvrEncoderConfig ec = encoder_config(c);
      const EncoderTrainResult res = train_ovr_encoder(ec, train, [&](const EncoderEpoch& e, const DenseLayer& layer) {
        epoch_record(e.epoch, e.mean_J, detail::encoder_val_cost(layer, val.X, ec), encoder_forward(layer, val.X).H,
                     nan);
      });
      const Matrix reps = encoder_forward(res.layer, train.X).H;
      const Matrix val_reps = encoder_forward(res.layer, val.X).H;
      const SparsityReport sp = sparsity(val_reps, tau);
      fin.epoch = c.epochs - 1;
      fin.train_loss = res.history.empty() ? nan : res.history.back().mean_J;
      fin.val_loss = detail::encoder_val_cost(res.layer, val.X, ec);
      fin.sparsity = sp.mean_sparsity;
      fin.mean_activation = sp.mean_activation;
      fin.probe_accuracy = train_logistic_probe(reps, train.y, val_reps, val.y, classes, pc);
      add_layer(ck, res.layer, "encoder.");
      break;
    }
    case ModelKind::kmeans: {
      const KMeansModel km = kmeans_fit(train.X, c.hidden_units, c.kmeans_epochs, c.seed);
      const Matrix reps = kmeans_encode(km, train.X, c.kmeans_encoding);
      const Matrix val_reps = kmeans_encode(km, val.X, c.kmeans_encoding);
      const SparsityReport sp = sparsity(val_reps, tau);
      fin.epoch = c.kmeans_epochs - 1;
      fin.train_loss = detail::mean_quantization_error(km, train.X);
      fin.val_loss = detail::mean_quantization_error(km, val.X);
      fin.sparsity = sp.mean_sparsity;
      fin.mean_activation = sp.mean_activation;
      fin.probe_accuracy = train_logistic_probe(reps, train.y, val_reps, val.y, classes, pc);
      ck.arrays.emplace_back("kmeans.centroids", km.centroids);
      break;
    }
    case ModelKind::logistic_only: {
      const ProbeResult pr = train_logistic_probe_full(train.X, train.y, val.X, val.y, classes, pc);
      fin.epoch = pr.best_epoch;
      fin.train_loss = softmax_ce_loss_grad(dense_forward(pr.layer, train.X).H, train.y).loss;
      fin.val_loss = softmax_ce_loss_grad(dense_forward(pr.layer, val.X).H, val.y).loss;
      fin.probe_accuracy = pr.accuracy;
      add_layer(ck, pr.layer, "probe.");
      break;
    }
  }
  fin.wall_time_seconds = elapsed();
  out.push_back(fin);

  if (!c.checkpoint.empty()) save_checkpoint(ck, c.checkpoint);
  if (!c.pca_out.empty() && data->pca) save_checkpoint(pca_checkpoint(*data->pca), c.pca_out);
  return out;
}

// ---------------------------------------------------------------------------
// Record files

inline int status_rank(const std::string& s) { return s == "epoch" ? 0 : (s == "final" ? 1 : 2); }

inline void sort_records(std::vector<RunRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.model, a.hidden, a.lambda, a.seed, a.config_hash) <
               std::tie(b.model, b.hidden, b.lambda, b.seed, b.config_hash) ||
           (std::tie(a.model, a.hidden, a.lambda, a.seed, a.config_hash) ==
                std::tie(b.model, b.hidden, b.lambda, b.seed, b.config_hash) &&
            std::make_pair(status_rank(a.status), a.epoch) < std::make_pair(status_rank(b.status), b.epoch));
  });
}

inline std::vector<RunRecord> load_records_if_exists(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return read_run_records(in);
}

inline void write_records_file(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    write_run_records(out, records);
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Replaces the rows of every run in `fresh` (by config hash) and keeps the rest.
inline std::vector<RunRecord> merge_records(std::vector<RunRecord> existing, const std::vector<RunRecord>& fresh) {
  std::set<std::string> replaced;
  for (const auto& r : fresh) replaced.insert(r.config_hash);
  std::erase_if(existing, [&](const RunRecord& r) { return replaced.count(r.config_hash) > 0; });
  existing.insert(existing.end(), fresh.begin(), fresh.end());
  sort_records(existing);
  return existing;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepOptions {
  int jobs = 1;
  bool force = false;
  std::filesystem::path csv_path = "results.csv";
};

struct SweepSummary {
  std::size_t cells = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<RunRecord> records;  // full merged file content
};

inline std::string with_hash_suffix(const std::string& path, const std::string& hash) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  const auto stem = p.stem().string() + "-" + hash.substr(0, 8);
  return (p.parent_path() / (stem + p.extension().string())).string();
}

inline SweepSummary sweep(const ExperimentConfig& base, const std::vector<std::vector<Override>>& grid,
                          const SweepOptions& opt) {
  if (grid.empty()) throw InvalidArgument("sweep: empty grid");
  SweepSummary summary;
  std::vector<RunRecord> existing = load_records_if_exists(opt.csv_path);
  std::set<std::string> done;
  for (const auto& r : existing)
    if (r.status == "final") done.insert(r.config_hash);

  std::vector<ExperimentConfig> todo;
  std::set<std::string> queued;
  for (const auto& cell : grid) {
    ExperimentConfig c = apply_overrides(base, cell, "sweep");
    validate(c);
    const std::string h = config_hash(c);
    if (!queued.insert(h).second) continue;
    ++summary.cells;
    if (!opt.force && done.count(h)) {
      ++summary.skipped;
      continue;
    }
    if (grid.size() > 1) {
      c.checkpoint = with_hash_suffix(c.checkpoint, h);
      c.pca_out = with_hash_suffix(c.pca_out, h);
    }
    todo.push_back(std::move(c));
  }

  // Datasets are prepared once, up front, and shared read-only by the workers.
  std::map<std::string, std::shared_ptr<const PreparedData>> cache;
  std::map<std::string, std::string> prep_errors;
  for (const auto& c : todo) {
    const std::string key = dataset_key(c);
    if (cache.count(key)) continue;
    try {
      cache[key] = std::make_shared<const PreparedData>(prepare_data(c));
    } catch (const std::exception& e) {
      cache[key] = nullptr;
      prep_errors[key] = e.what();
    }
  }

  std::vector<std::vector<RunRecord>> results(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const ExperimentConfig& c = todo[i];
      const auto data = cache.at(dataset_key(c));
      try {
        if (!data) throw Error(prep_errors.at(dataset_key(c)));
        results[i] = run_experiment(c, data.get());
      } catch (const std::exception& e) {
        RunRecord r;
        r.config_hash = config_hash(c);
        r.run_id = run_id_for(c, r.config_hash);
        r.status = "failed";
        r.model = std::string(to_string(c.model));
        r.dataset = dataset_key(c);
        r.hidden = c.hidden_units;
        r.lambda = c.reg.lambda;
        r.activation = std::string(to_string(c.activation));
        r.seed = c.seed;
        r.message = e.what();
        results[i] = {r};
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(todo.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<RunRecord> fresh;
  for (const auto& rs : results) {
    for (const auto& r : rs) {
      if (r.status == "failed") ++summary.failed;
      fresh.push_back(r);
    }
  }
  summary.records = merge_records(std::move(existing), fresh);
  write_records_file(opt.csv_path, summary.records);
  return summary;
}

}  // namespace ovr

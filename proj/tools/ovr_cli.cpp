// ovr: command-line driver for the sparse-representation experiments.
//
//   ovr gen-sphere       write a sphere toy dataset as CSV
//   ovr train            run one configured experiment
//   ovr sweep            run the [sweep] grid of a config file
//   ovr probe            logistic probe on the representations of a checkpoint
//   ovr export-features  tile encoder weights into a PPM image
//   ovr plot             SVG line plot from a results CSV

#include "ovr/checkpoint.hpp"
#include "ovr/config.hpp"
#include "ovr/datasets.hpp"
#include "ovr/experiment.hpp"
#include "ovr/image.hpp"
#include "ovr/plot.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> sets;
};

fs::path under(const std::string& dir, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(dir) / path;
}

ovr::ParsedConfig load_with_overrides(const Common& c) {
  ovr::ParsedConfig pc;
  if (!c.config.empty()) pc = ovr::load_config(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ovr::ConfigError("--set expects key=value, got '" + s + "'");
    ovr::set_field(pc.base, s.substr(0, eq), s.substr(eq + 1), "--set");
  }
  if (c.seed) pc.base.seed = *c.seed;
  auto& b = pc.base;
  fs::create_directories(c.out_dir);
  b.csv = under(c.out_dir, b.csv).string();
  b.checkpoint = under(c.out_dir, b.checkpoint).string();
  b.pca_out = under(c.out_dir, b.pca_out).string();
  return pc;
}

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("--config", c.config, "Experiment config file");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Override run.seed");
  app->add_option("--out", c.out_dir, "Output directory for relative output paths")->capture_default_str();
  app->add_option("--set", c.sets, "Override a config field, e.g. --set reg.lambda=1e-4");
}

void print_final(const std::vector<ovr::RunRecord>& records) {
  for (const auto& r : records) {
    if (r.status != "final" && r.status != "failed") continue;
    std::cout << r.run_id << " " << r.status << " model=" << r.model << " hidden=" << r.hidden
              << " lambda=" << ovr::format_double(r.lambda) << " seed=" << r.seed
              << " sparsity=" << ovr::format_double(r.sparsity)
              << " probe_accuracy=" << ovr::format_double(r.probe_accuracy);
    if (!r.message.empty()) std::cout << " error=\"" << r.message << "\"";
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-representation experiments: OVR regularizer and OVR-Encoder"};
  app.require_subcommand(1);

  // gen-sphere
  ovr::SpherePartitionSpec spec;
  std::string sphere_out = ".", sphere_file = "sphere.csv";
  auto* gen = app.add_subcommand("gen-sphere", "Write a sphere toy dataset (x,y,z,label CSV)");
  gen->add_option("--m-sectors", spec.m_sectors, "Longitudinal sectors")->capture_default_str();
  gen->add_option("--n-cuts", spec.n_cuts, "Latitudinal cuts (N+1 bands)")->capture_default_str();
  gen->add_option("--classes", spec.num_classes, "Number of classes")->capture_default_str();
  gen->add_option("--points", spec.num_points, "Number of points")->capture_default_str();
  gen->add_option("--seed", spec.seed, "Seed")->capture_default_str();
  gen->add_option("--out", sphere_out, "Output directory")->capture_default_str();
  gen->add_option("--file", sphere_file, "Output file name")->capture_default_str();

  Common train_opts;
  auto* train = app.add_subcommand("train", "Run one experiment and merge its rows into the results CSV");
  add_common(train, train_opts, true);

  Common sweep_opts;
  int jobs = 1;
  bool force = false;
  auto* sw = app.add_subcommand("sweep", "Run every cell of the config's [sweep] grid");
  add_common(sw, sweep_opts, true);
  sw->add_option("--jobs", jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);
  sw->add_flag("--force", force, "Rerun cells whose results already exist");

  Common probe_opts;
  std::string probe_ck, probe_layer = "encoder.";
  bool probe_raw = false;
  auto* probe = app.add_subcommand("probe", "Train the logistic probe on a checkpoint's representations");
  add_common(probe, probe_opts, true);
  probe->add_option("--checkpoint", probe_ck, "Checkpoint holding the encoder layer");
  probe->add_option("--layer", probe_layer, "Array prefix of the layer in the checkpoint")->capture_default_str();
  probe->add_flag("--raw", probe_raw, "Probe the raw (or PCA) inputs instead of a checkpoint");

  std::string ex_ck, ex_pca, ex_layer = "encoder.", ex_out = ".", ex_file = "features.ppm";
  int ex_cols = 8;
  auto* ex = app.add_subcommand("export-features", "Tile encoder weight rows into a PPM (P6) image");
  ex->add_option("--checkpoint", ex_ck, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  ex->add_option("--pca", ex_pca, "PCA model checkpoint (omit when weights are raw pixels)");
  ex->add_option("--layer", ex_layer, "Array prefix of the layer")->capture_default_str();
  ex->add_option("--cols", ex_cols, "Tiles per row")->capture_default_str()->check(CLI::PositiveNumber);
  ex->add_option("--out", ex_out, "Output directory")->capture_default_str();
  ex->add_option("--file", ex_file, "Output file name")->capture_default_str();

  std::string pl_csv, pl_x = "lambda", pl_y = "sparsity", pl_group = "hidden", pl_status = "final", pl_out = ".",
              pl_file = "plot.svg";
  auto* pl = app.add_subcommand("plot", "SVG plot of one results column against another, one line per group");
  pl->add_option("--csv", pl_csv, "Results CSV")->required()->check(CLI::ExistingFile);
  pl->add_option("--x", pl_x, "X column (log scale for lambda)")->capture_default_str();
  pl->add_option("--y", pl_y, "Y column")->capture_default_str();
  pl->add_option("--group", pl_group, "Group-by column")->capture_default_str();
  pl->add_option("--status", pl_status, "Keep rows with this status (empty: all rows)")->capture_default_str();
  pl->add_option("--out", pl_out, "Output directory")->capture_default_str();
  pl->add_option("--file", pl_file, "Output file name")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto d = ovr::generate_sphere_dataset(spec);
      fs::create_directories(sphere_out);
      const auto path = fs::path(sphere_out) / sphere_file;
      std::ofstream out(path);
      if (!out) throw ovr::FormatError("cannot write " + path.string());
      ovr::write_sphere_csv(d, out);
      std::cout << "wrote " << d.X.rows() << " points (" << spec.partition_count() << " partitions) to " << path.string()
                << "\n";
    } else if (*train) {
      const auto pc = load_with_overrides(train_opts);
      const auto records = ovr::run_experiment(pc.base);
      const auto merged = ovr::merge_records(ovr::load_records_if_exists(pc.base.csv), records);
      ovr::write_records_file(pc.base.csv, merged);
      print_final(records);
    } else if (*sw) {
      const auto pc = load_with_overrides(sweep_opts);
      ovr::SweepOptions opt;
      opt.jobs = jobs;
      opt.force = force;
      opt.csv_path = pc.base.csv;
      const auto summary = ovr::sweep(pc.base, ovr::expand_grid(pc), opt);
      std::cout << "cells=" << summary.cells << " skipped=" << summary.skipped << " failed=" << summary.failed
                << " csv=" << opt.csv_path.string() << "\n";
      print_final(summary.records);
      if (summary.failed > 0) return 3;
    } else if (*probe) {
      const auto pc = load_with_overrides(probe_opts);
      const auto data = ovr::prepare_data(pc.base);
      ovr::Matrix reps = data.train.X, val_reps = data.val.X;
      if (!probe_raw) {
        if (probe_ck.empty()) throw ovr::ConfigError("probe: --checkpoint is required unless --raw is given");
        const auto layer = ovr::layer_from(ovr::load_checkpoint(probe_ck), probe_layer);
        reps = ovr::dense_forward(layer, data.train.X).H;
        val_reps = ovr::dense_forward(layer, data.val.X).H;
      }
      ovr::ProbeConfig cfg;
      cfg.epochs = pc.base.probe_epochs;
      cfg.lr = pc.base.probe_lr;
      cfg.batch_size = pc.base.batch_size;
      cfg.seed = pc.base.seed;
      const double acc = ovr::train_logistic_probe(reps, data.train.y, val_reps, data.val.y,
                                                   std::max(data.train.class_count, data.val.class_count), cfg);
      std::cout << "probe_accuracy=" << ovr::format_double(acc) << "\n";
    } else if (*ex) {
      const auto ck = ovr::load_checkpoint(ex_ck);
      const ovr::Matrix& W = ck.array(ex_layer + "W");
      std::optional<ovr::PcaModel> pca;
      if (!ex_pca.empty()) pca = ovr::pca_from(ovr::load_checkpoint(ex_pca));
      fs::create_directories(ex_out);
      const auto path = fs::path(ex_out) / ex_file;
      ovr::export_features(W, pca ? &*pca : nullptr, path, ex_cols);
      std::cout << "wrote " << W.rows() << " features to " << path.string() << "\n";
    } else if (*pl) {
      ovr::PlotOptions opt;
      if (!pl_status.empty()) opt.filter = std::make_pair(std::string("status"), pl_status);
      fs::create_directories(pl_out);
      const auto path = fs::path(pl_out) / pl_file;
      ovr::plot_csv(pl_csv, pl_x, pl_y, pl_group, path, opt);
      std::cout << "wrote " << path.string() << "\n";
    }
  } catch (const ovr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

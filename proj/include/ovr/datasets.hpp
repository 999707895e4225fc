#pragma once

// Sphere toy manifold, CIFAR-10 ingestion, PCA and mini-batching.

#include "ovr/common.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ovr {

struct SpherePartitionSpec {
  int m_sectors = 8;
  int n_cuts = 4;
  int num_classes = 10;
  int num_points = 5000;
  std::uint64_t seed = 0;

  int partition_count() const { return m_sectors * (n_cuts + 1); }
};

struct LabeledDataset {
  Matrix X;
  Labels y;
  int class_count = 0;
  std::string provenance;

  Eigen::Index num_samples() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

inline void validate(const LabeledDataset& d) {
  if (d.X.rows() == 0) throw InvalidArgument("dataset: no samples");
  if (static_cast<std::size_t>(d.X.rows()) != d.y.size())
    throw ShapeError("dataset: " + std::to_string(d.X.rows()) + " rows but " +
                     std::to_string(d.y.size()) + " labels");
  if (d.class_count <= 0) throw InvalidArgument("dataset: class_count must be positive");
  for (std::size_t i = 0; i < d.y.size(); ++i)
    if (d.y[i] < 0 || d.y[i] >= d.class_count)
      throw InvalidArgument("dataset: label " + std::to_string(d.y[i]) + " at row " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(d.class_count) + ")");
  if (!d.X.allFinite()) throw NumericError("dataset: non-finite sample value");
}

// Rows [begin, end) as a new dataset.
inline LabeledDataset slice_rows(const LabeledDataset& d, Eigen::Index begin, Eigen::Index end) {
  LabeledDataset out;
  out.X = d.X.middleRows(begin, end - begin);
  out.y.assign(d.y.begin() + begin, d.y.begin() + end);
  out.class_count = d.class_count;
  out.provenance = d.provenance;
  return out;
}

// ---------------------------------------------------------------------------
// Sphere manifold

// Bands are equal-angle in latitude, numbered from the north pole down.
// Sectors split the azimuth atan2(y, x) into equal ranges starting at -pi.
// atan2(0, 0) is 0, so both poles fall into sector floor(m_sectors / 2).
inline int partition_index(const std::array<double, 3>& p, int m_sectors, int n_cuts) {
  if (m_sectors <= 0 || n_cuts < 0)
    throw InvalidArgument("partition_index: need m_sectors >= 1 and n_cuts >= 0");
  const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  if (!(std::abs(norm - 1.0) <= 1e-6))
    throw InvalidArgument("partition_index: point is not on the unit sphere (norm " +
                          std::to_string(norm) + ")");
  const double z = std::clamp(p[2], -1.0, 1.0);
  const int bands = n_cuts + 1;
  int band = static_cast<int>(std::floor(bands * (1.0 - (std::asin(z) + M_PI / 2) / M_PI)));
  band = std::clamp(band, 0, n_cuts);
  int sector = static_cast<int>(std::floor(m_sectors * (std::atan2(p[1], p[0]) + M_PI) / (2 * M_PI)));
  sector = std::clamp(sector, 0, m_sectors - 1);
  return band * m_sectors + sector;
}

inline std::vector<int> sphere_class_table(const SpherePartitionSpec& spec, Rng& rng) {
  std::vector<int> table(static_cast<std::size_t>(spec.partition_count()));
  for (auto& c : table) c = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));
  return table;
}

inline LabeledDataset generate_sphere_dataset(const SpherePartitionSpec& spec) {
  if (spec.num_points <= 0) throw InvalidArgument("sphere spec: num_points must be positive");
  if (spec.m_sectors <= 0) throw InvalidArgument("sphere spec: m_sectors must be positive");
  if (spec.num_classes <= 0) throw InvalidArgument("sphere spec: num_classes must be positive");
  if (spec.n_cuts < 0) throw InvalidArgument("sphere spec: n_cuts must be non-negative");

  Rng rng(spec.seed);
  const auto table = sphere_class_table(spec, rng);

  LabeledDataset d;
  d.X.resize(spec.num_points, 3);
  d.y.resize(static_cast<std::size_t>(spec.num_points));
  d.class_count = spec.num_classes;
  for (int i = 0; i < spec.num_points; ++i) {
    std::array<double, 3> p{};
    double norm = 0.0;
    do {
      for (auto& c : p) c = rng.normal();
      norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    } while (norm < 1e-12);
    for (int c = 0; c < 3; ++c) {
      p[c] /= norm;
      d.X(i, c) = p[c];
    }
    d.y[static_cast<std::size_t>(i)] = table[static_cast<std::size_t>(partition_index(p, spec.m_sectors, spec.n_cuts))];
  }
  std::ostringstream prov;
  prov << "sphere(M=" << spec.m_sectors << ",N=" << spec.n_cuts << ",C=" << spec.num_classes
       << ",points=" << spec.num_points << ",seed=" << spec.seed << ")";
  d.provenance = prov.str();
  return d;
}

inline std::vector<int> sphere_partitions(const LabeledDataset& d, int m_sectors, int n_cuts) {
  std::vector<int> out(static_cast<std::size_t>(d.X.rows()));
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    out[static_cast<std::size_t>(i)] = partition_index({d.X(i, 0), d.X(i, 1), d.X(i, 2)}, m_sectors, n_cuts);
  return out;
}

inline void write_sphere_csv(const LabeledDataset& d, std::ostream& os) {
  if (d.X.cols() != 3) throw ShapeError("sphere csv: expected 3 columns, got " + std::to_string(d.X.cols()));
  os << "x,y,z,label\n";
  char buf[32];
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", d.X(i, c));
      os << buf << ',';
    }
    os << d.y[static_cast<std::size_t>(i)] << '\n';
  }
}

inline LabeledDataset read_sphere_csv(std::istream& is, int class_count) {
  std::string line;
  if (!std::getline(is, line) || line != "x,y,z,label")
    throw FormatError("sphere csv: missing header 'x,y,z,label'");
  std::vector<std::array<double, 3>> pts;
  Labels labels;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::array<double, 3> p{};
    int label = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d%c", &p[0], &p[1], &p[2], &label, &tail) != 4)
      throw FormatError("sphere csv: malformed line " + std::to_string(line_no));
    pts.push_back(p);
    labels.push_back(label);
  }
  LabeledDataset d;
  d.X.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) d.X(static_cast<Eigen::Index>(i), c) = pts[i][static_cast<std::size_t>(c)];
  d.y = std::move(labels);
  d.class_count = class_count;
  d.provenance = "sphere-csv";
  validate(d);
  return d;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordsPerFile = 10000;

// Reads one batch file. Pixels are scaled to [0,1] and keep the planar R,G,B layout.
inline LabeledDataset read_cifar10_batch(const std::filesystem::path& path,
                                         std::size_t records = kCifarRecordsPerFile) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(name + ": cannot open file");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  const std::size_t expected = records * kCifarRecordBytes;
  if (size != expected) {
    std::string msg = name + ": size " + std::to_string(size) + " bytes, expected " + std::to_string(expected);
    if (size < expected)
      msg += " (record " + std::to_string(size / kCifarRecordBytes) + " incomplete)";
    else
      msg += " (trailing bytes after record " + std::to_string(records - 1) + ")";
    throw FormatError(msg);
  }

  LabeledDataset d;
  d.X.resize(static_cast<Eigen::Index>(records), static_cast<Eigen::Index>(kCifarPixels));
  d.y.resize(records);
  d.class_count = 10;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (std::size_t r = 0; r < records; ++r) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(kCifarRecordBytes));
    if (!in) throw FormatError(name + ": read failure at record " + std::to_string(r));
    if (rec[0] > 9)
      throw FormatError(name + ": record " + std::to_string(r) + ": label byte " +
                        std::to_string(static_cast<int>(rec[0])) + " > 9");
    d.y[r] = rec[0];
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = rec[p + 1] / 255.0;
  }
  d.provenance = "cifar10:" + path.filename().string();
  return d;
}

inline LabeledDataset concat_rows(const std::vector<LabeledDataset>& parts) {
  LabeledDataset out;
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.X.rows();
  out.X.resize(rows, parts.empty() ? 0 : parts.front().X.cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.X.middleRows(at, p.X.rows()) = p.X;
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    at += p.X.rows();
    out.class_count = std::max(out.class_count, p.class_count);
  }
  return out;
}

inline std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::filesystem::path& dir) {
  std::vector<LabeledDataset> parts;
  for (int i = 1; i <= 5; ++i)
    parts.push_back(read_cifar10_batch(dir / ("data_batch_" + std::to_string(i) + ".bin")));
  LabeledDataset train = concat_rows(parts);
  train.provenance = "cifar10-train:" + dir.string();
  LabeledDataset test = read_cifar10_batch(dir / "test_batch.bin");
  test.provenance = "cifar10-test:" + dir.string();
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// PCA (no whitening)

struct PcaModel {
  RowVector mean;
  Matrix components;  // out_dims x dim, rows are principal directions
  Vector variances;

  Eigen::Index dim() const { return components.cols(); }
  Eigen::Index out_dims() const { return components.rows(); }
};

inline PcaModel fit_pca(const Matrix& X, Eigen::Index out_dims) {
  if (X.rows() < 2) throw InvalidArgument("fit_pca: need at least 2 samples");
  if (out_dims <= 0 || out_dims > std::min(X.rows(), X.cols()))
    throw InvalidArgument("fit_pca: out_dims " + std::to_string(out_dims) + " outside [1, " +
                          std::to_string(std::min(X.rows(), X.cols())) + "]");
  PcaModel m;
  m.mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - m.mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("fit_pca: eigendecomposition failed");

  const Eigen::Index dim = X.cols();
  m.components.resize(out_dims, dim);
  m.variances.resize(out_dims);
  // Eigen returns ascending eigenvalues.
  for (Eigen::Index k = 0; k < out_dims; ++k) {
    const Eigen::Index src = dim - 1 - k;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.components.row(k) = v.transpose();
    m.variances(k) = std::max(0.0, eig.eigenvalues()(src));
  }
  return m;
}

inline Matrix pca_transform(const PcaModel& m, const Matrix& X) {
  if (X.cols() != m.dim())
    throw ShapeError("pca_transform: input has " + std::to_string(X.cols()) + " columns, model expects " +
                     std::to_string(m.dim()));
  return (X.rowwise() - m.mean) * m.components.transpose();
}

inline Matrix pca_inverse(const PcaModel& m, const Matrix& Z) {
  if (Z.cols() != m.out_dims())
    throw ShapeError("pca_inverse: input has " + std::to_string(Z.cols()) + " columns, model has " +
                     std::to_string(m.out_dims()) + " components");
  Matrix out = Z * m.components;
  out.rowwise() += m.mean;
  return out;
}

// ---------------------------------------------------------------------------
// Mini-batches

struct Batch {
  Matrix X;
  Labels y;
  std::vector<Eigen::Index> indices;
};

// Index plan for one epoch: a permutation seeded with seed ^ epoch, chunked.
inline std::vector<std::vector<Eigen::Index>> batch_plan(Eigen::Index num_samples, Eigen::Index batch_size,
                                                         std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size <= 0) throw InvalidArgument("make_batches: batch_size must be at least 1");
  if (batch_size > num_samples)
    throw InvalidArgument("make_batches: batch_size " + std::to_string(batch_size) + " exceeds " +
                          std::to_string(num_samples) + " samples");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed ^ epoch);
  rng.shuffle(order);
  std::vector<std::vector<Eigen::Index>> plan;
  for (Eigen::Index start = 0; start < num_samples; start += batch_size) {
    const Eigen::Index end = std::min(num_samples, start + batch_size);
    plan.emplace_back(order.begin() + start, order.begin() + end);
  }
  return plan;
}

inline Matrix gather_rows(const Matrix& X, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
  return out;
}

inline Labels gather_labels(const Labels& y, const std::vector<Eigen::Index>& idx) {
  Labels out;
  if (y.empty()) return out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

inline std::vector<Batch> make_batches(const LabeledDataset& d, Eigen::Index batch_size, std::uint64_t seed,
                                       std::uint64_t epoch) {
  std::vector<Batch> out;
  for (auto& idx : batch_plan(d.X.rows(), batch_size, seed, epoch)) {
    Batch b;
    b.X = gather_rows(d.X, idx);
    b.y = gather_labels(d.y, idx);
    b.indices = std::move(idx);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace ovr

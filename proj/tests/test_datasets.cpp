#include "ovr/datasets.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace ovr;
namespace fs = std::filesystem;

TEST(Sphere, DefaultSpecHasFortyPartitions) {
  SpherePartitionSpec spec;
  const auto d = generate_sphere_dataset(spec);
  EXPECT_EQ(d.X.rows(), 5000);
  EXPECT_EQ(d.X.cols(), 3);
  EXPECT_EQ(d.y.size(), 5000u);
  const auto parts = sphere_partitions(d, 8, 4);
  EXPECT_EQ(std::set<int>(parts.begin(), parts.end()).size(), 40u);
  for (int label : d.y) {
    EXPECT_GE(label, 0);
    EXPECT_LT(label, 10);
  }
}

TEST(Sphere, PointsAreUnitNorm) {
  SpherePartitionSpec spec;
  spec.num_points = 2000;
  spec.seed = 11;
  const auto d = generate_sphere_dataset(spec);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) EXPECT_LE(std::abs(d.X.row(i).norm() - 1.0), 1e-12);
}

TEST(Sphere, SinglePartitionSingleClass) {
  SpherePartitionSpec spec{1, 0, 1, 300, 5};
  const auto d = generate_sphere_dataset(spec);
  for (int label : d.y) EXPECT_EQ(label, 0);
}

TEST(Sphere, LabelsFollowPartitionTable) {
  SpherePartitionSpec spec{4, 2, 3, 1000, 9};
  const auto d = generate_sphere_dataset(spec);
  Rng rng(spec.seed);
  const auto table = sphere_class_table(spec, rng);
  const auto parts = sphere_partitions(d, 4, 2);
  for (std::size_t i = 0; i < parts.size(); ++i) EXPECT_EQ(d.y[i], table[static_cast<std::size_t>(parts[i])]);
}

TEST(Sphere, SameSeedSameData) {
  SpherePartitionSpec spec{8, 4, 10, 200, 3};
  const auto a = generate_sphere_dataset(spec);
  const auto b = generate_sphere_dataset(spec);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
}

TEST(PartitionIndex, PositiveXAxisWithFourSectors) {
  EXPECT_EQ(partition_index({1, 0, 0}, 4, 0), 2);
  // Brute-force scan: which quarter of [-pi, pi) contains azimuth 0.
  int found = -1;
  for (int s = 0; s < 4; ++s) {
    const double lo = -M_PI + s * M_PI / 2, hi = lo + M_PI / 2;
    if (0.0 >= lo && 0.0 < hi) found = s;
  }
  EXPECT_EQ(found, 2);
}

TEST(PartitionIndex, PolesAreDeterministic) {
  for (int m : {1, 3, 8}) {
    for (int n : {0, 2, 4}) {
      EXPECT_EQ(partition_index({0, 0, 1}, m, n), m / 2);
      EXPECT_EQ(partition_index({0, 0, -1}, m, n), n * m + m / 2);
    }
  }
}

TEST(PartitionIndex, SameCellSameIndex) {
  const double a = 0.3, b = 0.31;
  const std::array<double, 3> p{std::cos(a) * 0.6, std::sin(a) * 0.6, 0.8};
  const std::array<double, 3> q{std::cos(b) * 0.6, std::sin(b) * 0.6, 0.8};
  EXPECT_EQ(partition_index(p, 8, 4), partition_index(q, 8, 4));
}

TEST(PartitionIndex, RejectsOffSphere) {
  EXPECT_THROW(partition_index({2, 0, 0}, 4, 1), InvalidArgument);
  EXPECT_THROW(partition_index({1, 0, 0}, 0, 1), InvalidArgument);
}

TEST(SphereCsv, RoundTripIsExact) {
  SpherePartitionSpec spec{8, 4, 10, 50, 1};
  const auto d = generate_sphere_dataset(spec);
  std::stringstream ss;
  write_sphere_csv(d, ss);
  const auto back = read_sphere_csv(ss, 10);
  EXPECT_EQ(back.X, d.X);
  EXPECT_EQ(back.y, d.y);
}

TEST(SphereCsv, RejectsBadHeader) {
  std::stringstream ss("a,b,c\n1,2,3\n");
  EXPECT_THROW(read_sphere_csv(ss, 10), FormatError);
}

// ---------------------------------------------------------------------------
// CIFAR-10 fixtures

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ovr_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string record(unsigned char label, unsigned char fill) {
  std::string r(kCifarRecordBytes, static_cast<char>(fill));
  r[0] = static_cast<char>(label);
  return r;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string error_of(const fs::path& p, std::size_t records) {
  try {
    read_cifar10_batch(p, records);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Cifar, ReadsRecords) {
  TempDir dir;
  std::string bytes = record(0, 0) + record(7, 255);
  bytes[kCifarRecordBytes + 1] = 51;  // first red pixel of record 1
  write_bytes(dir.path / "b.bin", bytes);
  const auto d = read_cifar10_batch(dir.path / "b.bin", 2);
  ASSERT_EQ(d.X.rows(), 2);
  ASSERT_EQ(d.X.cols(), 3072);
  EXPECT_EQ(d.y[0], 0);
  EXPECT_EQ(d.y[1], 7);
  EXPECT_TRUE(d.X.row(0).isZero(0));
  EXPECT_DOUBLE_EQ(d.X(1, 0), 0.2);
  EXPECT_DOUBLE_EQ(d.X(1, 3071), 1.0);
}

TEST(Cifar, TruncatedFileNamesRecord) {
  TempDir dir;
  const auto p = dir.path / "t.bin";
  std::string bytes = record(1, 1) + record(2, 2) + record(3, 3);
  bytes.pop_back();
  write_bytes(p, bytes);
  EXPECT_EQ(error_of(p, 3), p.string() + ": size 9218 bytes, expected 9219 (record 2 incomplete)");
}

TEST(Cifar, TrailingBytesRejected) {
  TempDir dir;
  const auto p = dir.path / "x.bin";
  write_bytes(p, record(1, 1) + "z");
  EXPECT_EQ(error_of(p, 1), p.string() + ": size 3074 bytes, expected 3073 (trailing bytes after record 0)");
}

TEST(Cifar, BadLabelNamesRecord) {
  TempDir dir;
  const auto p = dir.path / "l.bin";
  write_bytes(p, record(1, 1) + record(10, 0));
  EXPECT_EQ(error_of(p, 2), p.string() + ": record 1: label byte 10 > 9");
}

TEST(Cifar, MissingFile) {
  EXPECT_THROW(read_cifar10_batch("/nonexistent/data_batch_1.bin", 1), FormatError);
}

// ---------------------------------------------------------------------------
// PCA

TEST(Pca, MatchesJacobiOracle) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix X = oracle::random_matrix(gen, 6, 4);
    const auto m = fit_pca(X, 4);
    const Matrix C = X.rowwise() - X.colwise().mean();
    const auto [values, vectors] = oracle::jacobi_eigen((C.transpose() * C) / 5.0);
    for (int k = 0; k < 4; ++k) {
      EXPECT_NEAR(m.variances(k), std::max(0.0, values[static_cast<std::size_t>(k)]), 1e-8);
      const Eigen::VectorXd v = vectors.col(k);
      const Eigen::VectorXd c = m.components.row(k).transpose();
      EXPECT_LT(std::min((c - v).norm(), (c + v).norm()), 1e-8) << "trial " << trial << " component " << k;
    }
  }
}

TEST(Pca, AxisAlignedData) {
  Matrix X = Matrix::Zero(5, 3);
  for (int i = 0; i < 5; ++i) X(i, 0) = i - 2.0;
  const auto m = fit_pca(X, 3);
  EXPECT_NEAR(std::abs(m.components(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(m.variances(1), 0.0, 1e-12);
  EXPECT_NEAR(m.variances(2), 0.0, 1e-12);
}

TEST(Pca, VariancesNonIncreasing) {
  std::mt19937_64 gen(3);
  const Matrix X = oracle::random_matrix(gen, 30, 8);
  const auto m = fit_pca(X, 8);
  for (int k = 1; k < 8; ++k) EXPECT_LE(m.variances(k), m.variances(k - 1));
}

TEST(Pca, TransformOfMeanIsZero) {
  std::mt19937_64 gen(4);
  const Matrix X = oracle::random_matrix(gen, 10, 5);
  const auto m = fit_pca(X, 3);
  const Matrix Z = pca_transform(m, m.mean.replicate(4, 1));
  EXPECT_TRUE(Z.isZero(1e-12));
}

TEST(Pca, ComponentMapsToUnitVector) {
  std::mt19937_64 gen(5);
  const Matrix X = oracle::random_matrix(gen, 10, 5);
  const auto m = fit_pca(X, 5);
  const Matrix Z = pca_transform(m, m.mean + m.components.row(0));
  EXPECT_NEAR(Z(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(Z.rightCols(4).norm(), 0.0, 1e-12);
}

TEST(Pca, InverseBasics) {
  std::mt19937_64 gen(6);
  const Matrix X = oracle::random_matrix(gen, 12, 4);
  const auto m = fit_pca(X, 4);
  const Matrix zero = pca_inverse(m, Matrix::Zero(2, 4));
  EXPECT_TRUE((zero.rowwise() - m.mean).isZero(1e-14));
  const Matrix eye = pca_inverse(m, Matrix::Identity(4, 4));
  for (int k = 0; k < 4; ++k) EXPECT_LT((eye.row(k) - m.mean - m.components.row(k)).norm(), 1e-14);
  EXPECT_LT((pca_inverse(m, pca_transform(m, X)) - X).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, ShapeErrors) {
  std::mt19937_64 gen(7);
  const Matrix X = oracle::random_matrix(gen, 6, 4);
  EXPECT_THROW(fit_pca(X, 5), InvalidArgument);
  const auto m = fit_pca(X, 2);
  EXPECT_THROW(pca_transform(m, Matrix::Zero(1, 3)), ShapeError);
  EXPECT_THROW(pca_inverse(m, Matrix::Zero(1, 3)), ShapeError);
}

// ---------------------------------------------------------------------------
// Batching

TEST(Batches, ChunkSizes) {
  const auto plan = batch_plan(10, 3, 1, 0);
  ASSERT_EQ(plan.size(), 4u);
  EXPECT_EQ(plan[0].size(), 3u);
  EXPECT_EQ(plan[1].size(), 3u);
  EXPECT_EQ(plan[2].size(), 3u);
  EXPECT_EQ(plan[3].size(), 1u);
}

TEST(Batches, DeterministicPermutation) {
  EXPECT_EQ(batch_plan(50, 7, 4, 2), batch_plan(50, 7, 4, 2));
  EXPECT_NE(batch_plan(50, 7, 4, 2), batch_plan(50, 7, 4, 3));
  std::vector<Eigen::Index> all;
  for (const auto& b : batch_plan(50, 7, 4, 2)) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
}

TEST(Batches, RejectsBadSizes) {
  EXPECT_THROW(batch_plan(5, 0, 0, 0), InvalidArgument);
  EXPECT_THROW(batch_plan(5, 6, 0, 0), InvalidArgument);
}

TEST(Batches, MakeBatchesGathersLabels) {
  LabeledDataset d;
  d.X = Matrix(4, 1);
  d.X << 0, 1, 2, 3;
  d.y = {0, 1, 2, 3};
  d.class_count = 4;
  for (const auto& b : make_batches(d, 3, 9, 0))
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
      EXPECT_EQ(b.y[i], b.indices[i]);
      EXPECT_EQ(b.X(static_cast<Eigen::Index>(i), 0), static_cast<double>(b.indices[i]));
    }
}

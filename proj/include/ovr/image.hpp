#pragma once

// Renders encoder weight rows as a tiled RGB image (binary PPM).

#include "ovr/datasets.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace ovr {

inline constexpr int kTileSide = 32;
inline constexpr int kTileChannels = 3;

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;  // interleaved RGB, row-major
};

// Maps each feature to [0,255] by its own min and max. A flat feature
// (max - min below 1e-12 relative) becomes mid-gray 128.
inline std::vector<unsigned char> normalize_feature(const RowVector& f) {
  const double lo = f.minCoeff(), hi = f.maxCoeff();
  std::vector<unsigned char> out(static_cast<std::size_t>(f.size()));
  const double range = hi - lo;
  if (!(range > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))))) {
    std::fill(out.begin(), out.end(), static_cast<unsigned char>(128));
    return out;
  }
  for (Eigen::Index i = 0; i < f.size(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(255.0 * (f(i) - lo) / range));
  return out;
}

// `features` has one 3072-value row per feature in planar R,G,B order.
inline RgbImage tile_features(const Matrix& features, int grid_cols) {
  constexpr int plane = kTileSide * kTileSide;
  if (features.cols() != plane * kTileChannels)
    throw ShapeError("export_features: features have " + std::to_string(features.cols()) + " values, expected " +
                     std::to_string(plane * kTileChannels) + " (32x32x3)");
  if (grid_cols <= 0) throw InvalidArgument("export_features: grid_cols must be positive");
  const int n = static_cast<int>(features.rows());
  const int grid_rows = (n + grid_cols - 1) / grid_cols;
  RgbImage img;
  img.width = grid_cols * kTileSide;
  img.height = std::max(1, grid_rows) * kTileSide;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  for (int f = 0; f < n; ++f) {
    const auto tile = normalize_feature(features.row(f));
    const int ox = (f % grid_cols) * kTileSide, oy = (f / grid_cols) * kTileSide;
    for (int y = 0; y < kTileSide; ++y)
      for (int x = 0; x < kTileSide; ++x)
        for (int c = 0; c < kTileChannels; ++c)
          img.pixels[(static_cast<std::size_t>(oy + y) * img.width + (ox + x)) * 3 + c] =
              tile[static_cast<std::size_t>(c * plane + y * kTileSide + x)];
  }
  return img;
}

inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

// Weight rows live in PCA space; each is mapped back with pca_inverse. With
// no PCA model the rows must already be 3072-dimensional pixels.
inline RgbImage render_features(const Matrix& weights, const PcaModel* pca, int grid_cols) {
  if (pca) {
    if (weights.cols() != pca->out_dims())
      throw ShapeError("export_features: weights have " + std::to_string(weights.cols()) +
                       " inputs but the PCA model has " + std::to_string(pca->out_dims()) + " components");
    return tile_features(pca_inverse(*pca, weights), grid_cols);
  }
  return tile_features(weights, grid_cols);
}

inline void export_features(const Matrix& weights, const PcaModel* pca, const std::filesystem::path& out_path,
                            int grid_cols) {
  const std::string bytes = encode_ppm(render_features(weights, pca, grid_cols));
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw FormatError("export_features: cannot write " + out_path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("export_features: write failed for " + out_path.string());
}

}  // namespace ovr

#pragma once

#include "lpcgmn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lpcgmn {

/// Discretization of the target area into n_rows x n_cols cells of size
/// delta_x by delta_y. Cell (i, j) (zero-based) is centred at
/// ((i + 0.5) delta_x, (j + 0.5) delta_y); the covered area is
/// [0, n_rows delta_x] x [0, n_cols delta_y]. The x coordinate runs along rows.
struct GridSpec {
  double delta_x = 1.0;
  double delta_y = 1.0;
  Index n_rows = 1;
  Index n_cols = 1;

  void validate() const;
  [[nodiscard]] Eigen::Vector2d center(Index i, Index j) const {
    return {(static_cast<double>(i) + 0.5) * delta_x, (static_cast<double>(j) + 0.5) * delta_y};
  }
  [[nodiscard]] bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= static_cast<double>(n_rows) * delta_x &&
           p.y() <= static_cast<double>(n_cols) * delta_y;
  }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// One gain measurement at a continuous location (meters).
struct Sample {
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  double gain_db = 0.0;
  int frequency_index = 0;
};

/// Normalized channel-gain raster in [0, 1] with its dB range.
struct GainMap {
  Eigen::MatrixXd values;
  double min_db = -1.0;
  double max_db = 0.0;
  GridSpec spec;

  void validate() const;
};

/// Environment raster (1 = building/obstacle) plus transmitter raster.
struct CityMap {
  Eigen::MatrixXd environment_mask;
  Eigen::MatrixXd transmitter_map;
  GridSpec spec;

  void validate() const;
};

struct DatasetPair {
  std::string id;
  CityMap city;
  GainMap gain;
};

// ---------------------------------------------------------------------------
// Discretization

/// Per-cell sample index sets A_{i,j}.
struct CellAssignment {
  GridSpec spec;
  std::vector<std::vector<std::size_t>> cells;  // row-major over (i, j)

  [[nodiscard]] const std::vector<std::size_t>& at(Index i, Index j) const {
    return cells[static_cast<std::size_t>(i * spec.n_cols + j)];
  }
};

/// Assigns each sample to the nearest cell centre; equidistant samples go to
/// the lexicographically smallest (i, j). Throws OutOfBoundsError naming the
/// first sample outside the grid.
CellAssignment assign_to_grid(const std::vector<Sample>& samples, const GridSpec& spec);

/// Mean gain per cell in dB; `counts` records how many samples fell in each
/// cell. Empty cells hold 0 dB.
struct DbRaster {
  Eigen::MatrixXd gain_db;
  Eigen::MatrixXi counts;
};

DbRaster rasterize(const std::vector<Sample>& samples, const GridSpec& spec);

/// Min-max normalization with clipping to [min_db, max_db].
GainMap normalize(const Eigen::MatrixXd& raster_db, double min_db, double max_db, const GridSpec& spec);
/// As above, but cells without samples are written as 0.
GainMap normalize(const DbRaster& raster, double min_db, double max_db, const GridSpec& spec);
Eigen::MatrixXd denormalize(const GainMap& map);

// ---------------------------------------------------------------------------
// Augmentation

enum class Augment { identity, rot90, rot180, rot270, flip_h, flip_v };

Augment inverse(Augment op);
std::string to_string(Augment op);
Eigen::MatrixXd apply(Augment op, const Eigen::MatrixXd& raster);
/// Applies the same spatial transform to every raster of the pair.
DatasetPair augment(const DatasetPair& pair, Augment op);

// ---------------------------------------------------------------------------
// Dataset files

enum class DatasetLayout { toolkit, radiomapseer };

struct ToolkitManifest {
  std::string format = "lpcgmn-toolkit";
  int version = 1;
  double min_db = -130.0;
  double max_db = -30.0;
  double frequency_hz = 5.9e9;
  GridSpec grid;
  std::vector<std::string> ids;
  std::string generator_json = "{}";  // free-form provenance of the generator
};

/// Writes `<root>/manifest.json` and `<root>/maps/<id>_{env,tx,gain}.png`
/// (8-bit grayscale). Values are quantized to k/255.
void save_toolkit_dataset(const std::filesystem::path& root, const ToolkitManifest& manifest,
                          const std::vector<DatasetPair>& pairs);

ToolkitManifest read_toolkit_manifest(const std::filesystem::path& root);

/// Location of one RadioMapSeer sample (buildings, antenna, gain images).
struct RadioMapSeerEntry {
  int map_index = 0;
  int tx_index = 0;
  std::filesystem::path buildings;
  std::filesystem::path antenna;
  std::filesystem::path gain;
};

struct RadioMapSeerOptions {
  std::string simulation = "DPM";  // gain/<simulation>/ subdirectory
  int max_maps = 701;              // scan limit for map ids
  int tx_per_map = 80;
  // Truncation bounds of the public gain images.
  double min_db = -147.0;
  double max_db = -47.84;
};

/// Lists every (map, transmitter) sample whose three images exist.
std::vector<RadioMapSeerEntry> scan_radiomapseer(const std::filesystem::path& root, const RadioMapSeerOptions& options = {});
DatasetPair load_radiomapseer_pair(const RadioMapSeerEntry& entry, const RadioMapSeerOptions& options = {});

/// Loads the pairs under `root` in deterministic (id) order; `limit` > 0
/// keeps only the first `limit`.
std::vector<DatasetPair> load_dataset(const std::filesystem::path& root, DatasetLayout layout, std::size_t limit = 0);

// 8-bit grayscale PNG helpers (rows x cols, values in [0, 1] quantized to k/255).
void write_png_gray(const std::filesystem::path& path, const Eigen::MatrixXd& values);
Eigen::MatrixXd read_png_gray(const std::filesystem::path& path);

}  // namespace lpcgmn

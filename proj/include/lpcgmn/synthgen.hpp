#pragma once

// Toy city scenes and channel-gain maps built from the log-distance path-loss
// model plus a straight-ray obstacle penalty, so the whole toolkit can be
// exercised without an external ray-tracing dataset.

#include "lpcgmn/gridmap.hpp"
#include "lpcgmn/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lpcgmn::synth {

/// Link budget quantities. Defaults are the 5.9 GHz / 10 MHz / 23 dBm setup.
struct RadioParams {
  double tx_power_dbm = 23.0;
  double bandwidth_hz = 10e6;
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_db = 0.0;
  double carrier_hz = 5.9e9;

  void validate() const;
};

/// Log-distance model G = intercept + 10 * exponent * log10(|x|) + S with
/// S ~ N(0, shadow_std^2). The exponent is a signed slope in this form, so a
/// decaying gain needs exponent < 0.
struct PathLossParams {
  double intercept_db = -40.0;
  double exponent = -2.5;
  double shadow_std_db = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SceneParams {
  int n_buildings = 6;
  int building_size_min = 4;  // cells
  int building_size_max = 12;
  int n_vehicles = 0;
  double obstacle_extra_loss_db = 2.0;  // per obstacle cell crossed
  std::uint64_t rng_seed = 7;

  void validate(const GridSpec& grid) const;
};

/// Per-dataset truncation bounds applied before graying.
struct GainRange {
  double min_db = -130.0;
  double max_db = -30.0;
};

// Link budget -------------------------------------------------------------

/// Channel gain in dB: received power minus transmitted power.
double gain_db(const RadioParams& radio, double received_dbm);
double received_power_dbm(const RadioParams& radio, double gain_db);
/// Noise power N0 * B (with noise figure) in dBm.
double noise_power_dbm(const RadioParams& radio);
double snr_db(const RadioParams& radio, double gain_db);
/// Average received energy per symbol G * P_X / B + N0, in mW/Hz, for a
/// linear gain G.
double average_received_energy(const RadioParams& radio, double gain_linear);

// Stochastic path loss ----------------------------------------------------

/// Mean gain intercept + 10 * exponent * log10(|x|). Throws RangeError at the origin.
double pathloss_mean(const PathLossParams& params, const Eigen::Vector2d& location);
/// Mean plus one shadowing draw from `rng`; exactly the mean when shadow_std_db == 0.
double pathloss_gain(const PathLossParams& params, const Eigen::Vector2d& location, Rng& rng);
/// Gaussian density of the gain at `g`. Throws RangeError when shadow_std_db == 0.
double pathloss_pdf(double g, const Eigen::Vector2d& location, const PathLossParams& params);

// Scenes ------------------------------------------------------------------

struct CellRect {
  Index row = 0;
  Index col = 0;
  Index rows = 1;
  Index cols = 1;
};

struct SceneLayout {
  CityMap city;
  std::vector<CellRect> buildings;
  std::vector<CellRect> vehicles;
  Index tx_row = 0;
  Index tx_col = 0;
};

/// Axis-aligned rectangular buildings and vehicles plus a transmitter in a
/// free cell. Deterministic in scene.rng_seed. Throws Error when no free cell
/// is left for the transmitter.
SceneLayout generate_layout(const SceneParams& scene, const GridSpec& grid);
CityMap generate_scene(const SceneParams& scene, const GridSpec& grid);

/// Cells visited by the segment between the centres of two cells, endpoints
/// included, in walking order. Every cell the segment passes through is
/// visited; at exact corner crossings the row step is taken first.
std::vector<std::pair<Index, Index>> traverse_cells(Index r0, Index c0, Index r1, Index c1);

/// Transmitter cell: centroid of the positive transmitter region, rounded.
std::pair<Index, Index> transmitter_cell(const CityMap& city);

/// Gain in dB per cell before graying. Obstacle cells are left unmeasured
/// (count 0), so they gray to 0 like any empty cell.
DbRaster simulate_gain_db(const CityMap& city, const RadioParams& radio, const PathLossParams& pl, const SceneParams& scene);

GainMap simulate_gainmap(const CityMap& city, const RadioParams& radio, const PathLossParams& pl, const SceneParams& scene,
                         GainRange range = {});

// Datasets ----------------------------------------------------------------

struct SynthConfig {
  GridSpec grid{1.0, 1.0, 64, 64};
  RadioParams radio;
  PathLossParams pathloss;
  SceneParams scene;
  GainRange range;
};

/// Sample `index` of a dataset; its scene and shadowing streams are derived
/// from (seed, index), so samples can be produced in any order.
DatasetPair generate_pair(const SynthConfig& cfg, std::uint64_t index);
std::vector<DatasetPair> generate_dataset(const SynthConfig& cfg, std::size_t count);

/// Quantizes both maps to the 8-bit grid the toolkit format stores.
void quantize_8bit(DatasetPair& pair);

std::string to_json(const SynthConfig& cfg);

}  // namespace lpcgmn::synth

#include "lpcgmn/synthgen.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>

namespace lpcgmn::synth {

using json = nlohmann::json;

void RadioParams::validate() const {
  if (!(bandwidth_hz > 0.0)) throw RangeError("RadioParams: bandwidth_hz must be positive");
  if (!(carrier_hz > 0.0)) throw RangeError("RadioParams: carrier_hz must be positive");
}

void PathLossParams::validate() const {
  if (!(shadow_std_db >= 0.0)) throw RangeError("PathLossParams: shadow_std_db must be >= 0");
}

void SceneParams::validate(const GridSpec& grid) const {
  if (n_buildings < 0 || n_vehicles < 0) throw RangeError("SceneParams: counts must be >= 0");
  if (building_size_min < 1 || building_size_max < building_size_min)
    throw RangeError("SceneParams: building size range must satisfy 1 <= min <= max");
  if (building_size_max > grid.n_rows || building_size_max > grid.n_cols)
    throw RangeError("SceneParams: building_size_max exceeds the grid");
}

double gain_db(const RadioParams& radio, double received_dbm) { return received_dbm - radio.tx_power_dbm; }

double received_power_dbm(const RadioParams& radio, double gain) { return radio.tx_power_dbm + gain; }

double noise_power_dbm(const RadioParams& radio) {
  radio.validate();
  return radio.noise_psd_dbm_hz + radio.noise_figure_db + 10.0 * std::log10(radio.bandwidth_hz);
}

double snr_db(const RadioParams& radio, double gain) { return received_power_dbm(radio, gain) - noise_power_dbm(radio); }

double average_received_energy(const RadioParams& radio, double gain_linear) {
  radio.validate();
  const double tx_mw = std::pow(10.0, radio.tx_power_dbm / 10.0);
  const double n0_mw_hz = std::pow(10.0, (radio.noise_psd_dbm_hz + radio.noise_figure_db) / 10.0);
  return gain_linear * tx_mw / radio.bandwidth_hz + n0_mw_hz;
}

double pathloss_mean(const PathLossParams& params, const Eigen::Vector2d& location) {
  const double d = location.norm();
  if (!(d > 0.0)) throw RangeError("pathloss: location at the origin (log10 of zero distance)");
  return params.intercept_db + 10.0 * params.exponent * std::log10(d);
}

double pathloss_gain(const PathLossParams& params, const Eigen::Vector2d& location, Rng& rng) {
  params.validate();
  const double mean = pathloss_mean(params, location);
  if (params.shadow_std_db == 0.0) return mean;
  return mean + params.shadow_std_db * rng.normal();
}

double pathloss_pdf(double g, const Eigen::Vector2d& location, const PathLossParams& params) {
  params.validate();
  if (params.shadow_std_db == 0.0) throw RangeError("pathloss_pdf: shadow_std_db == 0 gives a degenerate distribution");
  const double var = params.shadow_std_db * params.shadow_std_db;
  const double z = g - pathloss_mean(params, location);
  return std::exp(-z * z / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

// ---------------------------------------------------------------------------

namespace {

CellRect random_rect(Rng& rng, const GridSpec& grid, Index min_size, Index max_size) {
  CellRect r;
  r.rows = rng.integer(min_size, max_size);
  r.cols = rng.integer(min_size, max_size);
  r.row = rng.integer(0, grid.n_rows - r.rows);
  r.col = rng.integer(0, grid.n_cols - r.cols);
  return r;
}

void fill(Eigen::MatrixXd& m, const CellRect& r) { m.block(r.row, r.col, r.rows, r.cols).setOnes(); }

}  // namespace

SceneLayout generate_layout(const SceneParams& scene, const GridSpec& grid) {
  grid.validate();
  scene.validate(grid);
  Rng rng(scene.rng_seed);
  SceneLayout out;
  out.city.spec = grid;
  out.city.environment_mask = Eigen::MatrixXd::Zero(grid.n_rows, grid.n_cols);
  for (int b = 0; b < scene.n_buildings; ++b) {
    out.buildings.push_back(random_rect(rng, grid, scene.building_size_min, scene.building_size_max));
    fill(out.city.environment_mask, out.buildings.back());
  }
  for (int v = 0; v < scene.n_vehicles; ++v) {
    CellRect r = random_rect(rng, grid, 1, 1);
    if (rng.uniform() < 0.5 && r.row + 1 < grid.n_rows)
      r.rows = 2;
    else if (r.col + 1 < grid.n_cols)
      r.cols = 2;
    out.vehicles.push_back(r);
    fill(out.city.environment_mask, r);
  }

  std::vector<std::pair<Index, Index>> free;
  for (Index j = 0; j < grid.n_cols; ++j)
    for (Index i = 0; i < grid.n_rows; ++i)
      if (out.city.environment_mask(i, j) == 0.0) free.emplace_back(i, j);
  if (free.empty()) throw Error("generate_scene: no free cell left for the transmitter");
  const auto pick = free[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(free.size()) - 1))];
  out.tx_row = pick.first;
  out.tx_col = pick.second;

  // 3x3 transmitter marker, clipped at the border: one connected region.
  out.city.transmitter_map = Eigen::MatrixXd::Zero(grid.n_rows, grid.n_cols);
  for (Index di = -1; di <= 1; ++di)
    for (Index dj = -1; dj <= 1; ++dj) {
      const Index i = out.tx_row + di;
      const Index j = out.tx_col + dj;
      if (i >= 0 && j >= 0 && i < grid.n_rows && j < grid.n_cols) out.city.transmitter_map(i, j) = 1.0;
    }
  return out;
}

CityMap generate_scene(const SceneParams& scene, const GridSpec& grid) { return generate_layout(scene, grid).city; }

std::vector<std::pair<Index, Index>> traverse_cells(Index r0, Index c0, Index r1, Index c1) {
  std::vector<std::pair<Index, Index>> cells;
  const Index dr = std::abs(r1 - r0);
  const Index dc = std::abs(c1 - c0);
  const Index sr = r1 > r0 ? 1 : -1;
  const Index sc = c1 > c0 ? 1 : -1;
  cells.reserve(static_cast<std::size_t>(dr + dc + 1));
  Index r = r0;
  Index c = c0;
  Index kr = 0;  // row boundaries crossed
  Index kc = 0;
  cells.emplace_back(r, c);
  // The k-th row boundary is crossed at parameter t = (2k + 1) / (2 dr);
  // compare crossings in exact integer arithmetic.
  for (Index step = 0; step < dr + dc; ++step) {
    bool row_step;
    if (kr == dr)
      row_step = false;
    else if (kc == dc)
      row_step = true;
    else
      row_step = (2 * kr + 1) * dc <= (2 * kc + 1) * dr;
    if (row_step) {
      r += sr;
      ++kr;
    } else {
      c += sc;
      ++kc;
    }
    cells.emplace_back(r, c);
  }
  return cells;
}

std::pair<Index, Index> transmitter_cell(const CityMap& city) {
  double w = 0.0;
  double ri = 0.0;
  double ci = 0.0;
  for (Index j = 0; j < city.transmitter_map.cols(); ++j)
    for (Index i = 0; i < city.transmitter_map.rows(); ++i) {
      const double v = city.transmitter_map(i, j);
      if (v <= 0.0) continue;
      w += v;
      ri += v * static_cast<double>(i);
      ci += v * static_cast<double>(j);
    }
  if (w <= 0.0) throw Error("transmitter map has no positive cell");
  return {static_cast<Index>(std::lround(ri / w)), static_cast<Index>(std::lround(ci / w))};
}

DbRaster simulate_gain_db(const CityMap& city, const RadioParams& radio, const PathLossParams& pl,
                          const SceneParams& scene) {
  city.validate();
  radio.validate();
  pl.validate();
  const GridSpec& grid = city.spec;
  const auto [tr, tc] = transmitter_cell(city);
  const Eigen::Vector2d bs = grid.center(tr, tc);
  // The transmitter's own cell is evaluated half a cell away to stay off the
  // log singularity.
  const double min_distance = 0.5 * std::min(grid.delta_x, grid.delta_y);
  Rng rng(pl.seed);

  DbRaster out{Eigen::MatrixXd::Zero(grid.n_rows, grid.n_cols), Eigen::MatrixXi::Zero(grid.n_rows, grid.n_cols)};
  for (Index j = 0; j < grid.n_cols; ++j)
    for (Index i = 0; i < grid.n_rows; ++i) {
      if (city.environment_mask(i, j) > 0.5) continue;
      Eigen::Vector2d offset = grid.center(i, j) - bs;
      if (offset.norm() < min_distance) offset = Eigen::Vector2d(min_distance, 0.0);
      double g = pathloss_gain(pl, offset, rng);
      int crossed = 0;
      for (const auto& [a, b] : traverse_cells(tr, tc, i, j))
        if (city.environment_mask(a, b) > 0.5) ++crossed;
      g -= scene.obstacle_extra_loss_db * crossed;
      out.gain_db(i, j) = g;
      out.counts(i, j) = 1;
    }
  return out;
}

GainMap simulate_gainmap(const CityMap& city, const RadioParams& radio, const PathLossParams& pl, const SceneParams& scene,
                         GainRange range) {
  return normalize(simulate_gain_db(city, radio, pl, scene), range.min_db, range.max_db, city.spec);
}

// ---------------------------------------------------------------------------

DatasetPair generate_pair(const SynthConfig& cfg, std::uint64_t index) {
  SceneParams scene = cfg.scene;
  scene.rng_seed = Rng::derive(cfg.scene.rng_seed, index).next();
  PathLossParams pl = cfg.pathloss;
  pl.seed = Rng::derive(cfg.pathloss.seed, index).next();
  DatasetPair p;
  char id[32];
  std::snprintf(id, sizeof(id), "%06llu", static_cast<unsigned long long>(index));
  p.id = id;
  p.city = generate_scene(scene, cfg.grid);
  p.gain = simulate_gainmap(p.city, cfg.radio, pl, scene, cfg.range);
  return p;
}

std::vector<DatasetPair> generate_dataset(const SynthConfig& cfg, std::size_t count) {
  std::vector<DatasetPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_pair(cfg, i));
  return out;
}

void quantize_8bit(DatasetPair& pair) {
  auto q = [](Eigen::MatrixXd& m) { m = (m.array().max(0.0).min(1.0) * 255.0).round() / 255.0; };
  q(pair.city.environment_mask);
  q(pair.city.transmitter_map);
  q(pair.gain.values);
}

std::string to_json(const SynthConfig& cfg) {
  json j = {
      {"grid", {{"delta_x", cfg.grid.delta_x}, {"delta_y", cfg.grid.delta_y}, {"n_rows", cfg.grid.n_rows}, {"n_cols", cfg.grid.n_cols}}},
      {"radio",
       {{"tx_power_dbm", cfg.radio.tx_power_dbm},
        {"bandwidth_hz", cfg.radio.bandwidth_hz},
        {"noise_psd_dbm_hz", cfg.radio.noise_psd_dbm_hz},
        {"noise_figure_db", cfg.radio.noise_figure_db},
        {"carrier_hz", cfg.radio.carrier_hz}}},
      {"pathloss",
       {{"intercept_db", cfg.pathloss.intercept_db},
        {"exponent", cfg.pathloss.exponent},
        {"shadow_std_db", cfg.pathloss.shadow_std_db},
        {"seed", cfg.pathloss.seed}}},
      {"scene",
       {{"n_buildings", cfg.scene.n_buildings},
        {"building_size_min", cfg.scene.building_size_min},
        {"building_size_max", cfg.scene.building_size_max},
        {"n_vehicles", cfg.scene.n_vehicles},
        {"obstacle_extra_loss_db", cfg.scene.obstacle_extra_loss_db},
        {"rng_seed", cfg.scene.rng_seed}}},
      {"range", {{"min_db", cfg.range.min_db}, {"max_db", cfg.range.max_db}}}};
  return j.dump();
}

}  // namespace lpcgmn::synth

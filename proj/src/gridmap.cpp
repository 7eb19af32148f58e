#include "lpcgmn/gridmap.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

namespace lpcgmn {

namespace fs = std::filesystem;
using json = nlohmann::json;

void GridSpec::validate() const {
  if (!(delta_x > 0.0) || !(delta_y > 0.0)) throw RangeError("GridSpec: delta_x and delta_y must be positive");
  if (n_rows < 1 || n_cols < 1) throw RangeError("GridSpec: n_rows and n_cols must be >= 1");
}

void GainMap::validate() const {
  spec.validate();
  if (values.rows() != spec.n_rows || values.cols() != spec.n_cols)
    throw ShapeError("GainMap: values shape does not match its GridSpec");
  if (!(max_db > min_db)) throw RangeError("GainMap: max_db must exceed min_db");
  if (values.size() > 0 && (values.minCoeff() < 0.0 || values.maxCoeff() > 1.0))
    throw RangeError("GainMap: values must lie in [0, 1]");
}

namespace {

// Number of 4-connected regions of strictly positive cells.
int positive_regions(const Eigen::MatrixXd& m) {
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(m.rows(), m.cols());
  int regions = 0;
  std::queue<std::pair<Index, Index>> q;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) <= 0.0 || seen(i, j)) continue;
      ++regions;
      seen(i, j) = 1;
      q.emplace(i, j);
      while (!q.empty()) {
        auto [a, b] = q.front();
        q.pop();
        const Index di[4] = {-1, 1, 0, 0};
        const Index dj[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const Index u = a + di[k];
          const Index v = b + dj[k];
          if (u < 0 || v < 0 || u >= m.rows() || v >= m.cols()) continue;
          if (m(u, v) > 0.0 && !seen(u, v)) {
            seen(u, v) = 1;
            q.emplace(u, v);
          }
        }
      }
    }
  return regions;
}

}  // namespace

void CityMap::validate() const {
  spec.validate();
  if (environment_mask.rows() != spec.n_rows || environment_mask.cols() != spec.n_cols ||
      transmitter_map.rows() != spec.n_rows || transmitter_map.cols() != spec.n_cols)
    throw ShapeError("CityMap: rasters must both be " + std::to_string(spec.n_rows) + "x" + std::to_string(spec.n_cols));
  const int regions = positive_regions(transmitter_map);
  if (regions != 1)
    throw RangeError("CityMap: transmitter map must have exactly one positive region, found " + std::to_string(regions));
}

// ---------------------------------------------------------------------------

namespace {

// Nearest centre index along one axis; a sample exactly halfway between two
// centres goes to the smaller index.
Index nearest_axis_index(double coord, double delta, Index n) {
  const double u = coord / delta - 0.5;
  auto i = static_cast<Index>(std::ceil(u - 0.5));
  return std::clamp<Index>(i, 0, n - 1);
}

}  // namespace

CellAssignment assign_to_grid(const std::vector<Sample>& samples, const GridSpec& spec) {
  spec.validate();
  CellAssignment out;
  out.spec = spec;
  out.cells.resize(static_cast<std::size_t>(spec.n_rows * spec.n_cols));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& p = samples[n].location;
    if (!p.allFinite() || !spec.contains(p)) {
      std::ostringstream msg;
      msg << "assign_to_grid: sample " << n << " at (" << p.x() << ", " << p.y() << ") lies outside the grid";
      throw OutOfBoundsError(msg.str());
    }
    const Index i = nearest_axis_index(p.x(), spec.delta_x, spec.n_rows);
    const Index j = nearest_axis_index(p.y(), spec.delta_y, spec.n_cols);
    out.cells[static_cast<std::size_t>(i * spec.n_cols + j)].push_back(n);
  }
  return out;
}

DbRaster rasterize(const std::vector<Sample>& samples, const GridSpec& spec) {
  const CellAssignment cells = assign_to_grid(samples, spec);
  DbRaster r{Eigen::MatrixXd::Zero(spec.n_rows, spec.n_cols), Eigen::MatrixXi::Zero(spec.n_rows, spec.n_cols)};
  for (Index i = 0; i < spec.n_rows; ++i)
    for (Index j = 0; j < spec.n_cols; ++j) {
      const auto& members = cells.at(i, j);
      if (members.empty()) continue;
      double sum = 0.0;
      for (std::size_t n : members) sum += samples[n].gain_db;
      r.gain_db(i, j) = sum / static_cast<double>(members.size());
      r.counts(i, j) = static_cast<int>(members.size());
    }
  return r;
}

GainMap normalize(const Eigen::MatrixXd& raster_db, double min_db, double max_db, const GridSpec& spec) {
  if (!(max_db > min_db))
    throw RangeError("normalize: max_db (" + std::to_string(max_db) + ") must exceed min_db (" + std::to_string(min_db) + ")");
  GainMap g;
  g.min_db = min_db;
  g.max_db = max_db;
  g.spec = spec;
  g.values = (raster_db.array().max(min_db).min(max_db) - min_db) / (max_db - min_db);
  return g;
}

GainMap normalize(const DbRaster& raster, double min_db, double max_db, const GridSpec& spec) {
  GainMap g = normalize(raster.gain_db, min_db, max_db, spec);
  g.values = (raster.counts.array() > 0).select(g.values, 0.0);
  return g;
}

Eigen::MatrixXd denormalize(const GainMap& map) {
  return (map.values.array() * (map.max_db - map.min_db) + map.min_db).matrix();
}

// ---------------------------------------------------------------------------

Augment inverse(Augment op) {
  switch (op) {
    case Augment::rot90: return Augment::rot270;
    case Augment::rot270: return Augment::rot90;
    default: return op;
  }
}

std::string to_string(Augment op) {
  switch (op) {
    case Augment::identity: return "identity";
    case Augment::rot90: return "rot90";
    case Augment::rot180: return "rot180";
    case Augment::rot270: return "rot270";
    case Augment::flip_h: return "flip_h";
    case Augment::flip_v: return "flip_v";
  }
  return "unknown";
}

Eigen::MatrixXd apply(Augment op, const Eigen::MatrixXd& m) {
  const bool rotation = op == Augment::rot90 || op == Augment::rot180 || op == Augment::rot270;
  if (rotation && m.rows() != m.cols())
    throw ShapeError("augment: " + to_string(op) + " requires a square raster, got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  switch (op) {
    case Augment::identity: return m;
    case Augment::rot90: return m.transpose().colwise().reverse();  // counter-clockwise
    case Augment::rot180: return m.reverse();
    case Augment::rot270: return m.transpose().rowwise().reverse();
    case Augment::flip_h: return m.rowwise().reverse();
    case Augment::flip_v: return m.colwise().reverse();
  }
  return m;
}

DatasetPair augment(const DatasetPair& pair, Augment op) {
  DatasetPair out = pair;
  out.city.environment_mask = apply(op, pair.city.environment_mask);
  out.city.transmitter_map = apply(op, pair.city.transmitter_map);
  out.gain.values = apply(op, pair.gain.values);
  if (op == Augment::rot90 || op == Augment::rot270) {
    std::swap(out.city.spec.delta_x, out.city.spec.delta_y);
    std::swap(out.gain.spec.delta_x, out.gain.spec.delta_y);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json grid_to_json(const GridSpec& g) {
  return {{"delta_x", g.delta_x}, {"delta_y", g.delta_y}, {"n_rows", g.n_rows}, {"n_cols", g.n_cols}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.delta_x = j.at("delta_x").get<double>();
  g.delta_y = j.at("delta_y").get<double>();
  g.n_rows = j.at("n_rows").get<Index>();
  g.n_cols = j.at("n_cols").get<Index>();
  g.validate();
  return g;
}

Eigen::MatrixXd load_raster(const fs::path& path, const GridSpec& grid) {
  Eigen::MatrixXd m = read_png_gray(path);
  if (m.rows() != grid.n_rows || m.cols() != grid.n_cols)
    throw LoadError("shape mismatch in " + path.string() + ": got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", manifest declares " + std::to_string(grid.n_rows) + "x" +
                    std::to_string(grid.n_cols));
  return m;
}

}  // namespace

void save_toolkit_dataset(const fs::path& root, const ToolkitManifest& manifest, const std::vector<DatasetPair>& pairs) {
  std::error_code ec;
  fs::create_directories(root / "maps", ec);
  if (ec) throw Error("cannot create dataset directory " + (root / "maps").string() + ": " + ec.message());
  json ids = json::array();
  for (const auto& p : pairs) {
    if (p.id.empty() || p.id.find('/') != std::string::npos) throw Error("save_toolkit_dataset: invalid id '" + p.id + "'");
    write_png_gray(root / "maps" / (p.id + "_env.png"), p.city.environment_mask);
    write_png_gray(root / "maps" / (p.id + "_tx.png"), p.city.transmitter_map);
    write_png_gray(root / "maps" / (p.id + "_gain.png"), p.gain.values);
    ids.push_back(p.id);
  }
  json m = {{"format", manifest.format},
            {"version", manifest.version},
            {"min_db", manifest.min_db},
            {"max_db", manifest.max_db},
            {"frequency_hz", manifest.frequency_hz},
            {"grid", grid_to_json(manifest.grid)},
            {"count", pairs.size()},
            {"ids", ids},
            {"generator", json::parse(manifest.generator_json)}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw Error("cannot write " + (root / "manifest.json").string());
  out << m.dump(2) << "\n";
}

ToolkitManifest read_toolkit_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  json j;
  try {
    in >> j;
    ToolkitManifest m;
    m.format = j.at("format").get<std::string>();
    if (m.format != "lpcgmn-toolkit") throw LoadError("unexpected dataset format '" + m.format + "' in " + path.string());
    m.version = j.at("version").get<int>();
    m.min_db = j.at("min_db").get<double>();
    m.max_db = j.at("max_db").get<double>();
    m.frequency_hz = j.value("frequency_hz", 0.0);
    m.grid = grid_from_json(j.at("grid"));
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.generator_json = j.value("generator", json::object()).dump();
    return m;
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const RangeError& e) {
    throw LoadError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::vector<RadioMapSeerEntry> scan_radiomapseer(const fs::path& root, const RadioMapSeerOptions& options) {
  const fs::path buildings = root / "png" / "buildings_complete";
  const fs::path antennas = root / "png" / "antennas";
  const fs::path gains = root / "gain" / options.simulation;
  if (!fs::is_directory(buildings) || !fs::is_directory(antennas) || !fs::is_directory(gains))
    throw LoadError("not a RadioMapSeer directory (expected png/buildings_complete, png/antennas, gain/" +
                    options.simulation + "): " + root.string());
  std::vector<RadioMapSeerEntry> entries;
  for (int m = 0; m < options.max_maps; ++m) {
    const fs::path b = buildings / (std::to_string(m) + ".png");
    if (!fs::exists(b)) continue;
    for (int t = 0; t < options.tx_per_map; ++t) {
      const std::string stem = std::to_string(m) + "_" + std::to_string(t) + ".png";
      RadioMapSeerEntry e{m, t, b, antennas / stem, gains / stem};
      if (fs::exists(e.antenna) && fs::exists(e.gain)) entries.push_back(std::move(e));
    }
  }
  return entries;
}

DatasetPair load_radiomapseer_pair(const RadioMapSeerEntry& entry, const RadioMapSeerOptions& options) {
  DatasetPair p;
  p.id = std::to_string(entry.map_index) + "_" + std::to_string(entry.tx_index);
  const Eigen::MatrixXd env = read_png_gray(entry.buildings);
  GridSpec grid{1.0, 1.0, env.rows(), env.cols()};
  p.city.spec = grid;
  p.city.environment_mask = (env.array() > 0.5).cast<double>();
  p.city.transmitter_map = load_raster(entry.antenna, grid);
  p.gain.values = load_raster(entry.gain, grid);
  p.gain.min_db = options.min_db;
  p.gain.max_db = options.max_db;
  p.gain.spec = grid;
  return p;
}

std::vector<DatasetPair> load_dataset(const fs::path& root, DatasetLayout layout, std::size_t limit) {
  if (!fs::is_directory(root)) throw LoadError("dataset directory does not exist: " + root.string());
  std::vector<DatasetPair> pairs;
  if (layout == DatasetLayout::radiomapseer) {
    for (const auto& e : scan_radiomapseer(root)) {
      if (limit && pairs.size() >= limit) break;
      pairs.push_back(load_radiomapseer_pair(e));
    }
    return pairs;
  }
  const ToolkitManifest m = read_toolkit_manifest(root);
  pairs.reserve(m.ids.size());
  for (const auto& id : m.ids) {
    if (limit && pairs.size() >= limit) break;
    DatasetPair p;
    p.id = id;
    p.city.spec = m.grid;
    p.city.environment_mask = load_raster(root / "maps" / (id + "_env.png"), m.grid);
    p.city.transmitter_map = load_raster(root / "maps" / (id + "_tx.png"), m.grid);
    p.gain.values = load_raster(root / "maps" / (id + "_gain.png"), m.grid);
    p.gain.min_db = m.min_db;
    p.gain.max_db = m.max_db;
    p.gain.spec = m.grid;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace lpcgmn

#include "lpcgmn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace lpcgmn::config {
namespace {

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type: " + j_.at(key).dump());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const GridSpec& g) {
  return {{"delta_x", g.delta_x}, {"delta_y", g.delta_y}, {"n_rows", g.n_rows}, {"n_cols", g.n_cols}};
}

json to_json(const ModelConfig& m) {
  return {{"levels", m.levels},         {"heads", m.heads},
          {"dilations", m.dilations},   {"lrdc_counts", m.lrdc_counts},
          {"width", m.width},           {"fine_width", m.fine_width},
          {"in_channels", m.in_channels}, {"out_channels", m.out_channels},
          {"reinject", m.reinject}};
}

json to_json(const train::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", t.optimizer},
          {"adam_betas", {t.beta1, t.beta2}},
          {"adam_eps", t.adam_eps},
          {"split_ratio", t.split_ratio},
          {"seed", t.seed}};
}

json to_json(const RunConfig& c) {
  const auto& s = c.synth;
  return {{"grid", to_json(s.grid)},
          {"radio",
           {{"tx_power_dbm", s.radio.tx_power_dbm},
            {"bandwidth_hz", s.radio.bandwidth_hz},
            {"noise_psd_dbm_hz", s.radio.noise_psd_dbm_hz},
            {"noise_figure_db", s.radio.noise_figure_db},
            {"carrier_hz", s.radio.carrier_hz}}},
          {"pathloss",
           {{"intercept_db", s.pathloss.intercept_db},
            {"exponent", s.pathloss.exponent},
            {"shadow_std_db", s.pathloss.shadow_std_db},
            {"seed", s.pathloss.seed}}},
          {"scene",
           {{"n_buildings", s.scene.n_buildings},
            {"building_size_range", {s.scene.building_size_min, s.scene.building_size_max}},
            {"n_vehicles", s.scene.n_vehicles},
            {"obstacle_extra_loss_db", s.scene.obstacle_extra_loss_db},
            {"rng_seed", s.scene.rng_seed}}},
          {"range", {{"min_db", s.range.min_db}, {"max_db", s.range.max_db}}},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"data",
           {{"dataset", c.data.dataset},
            {"layout", c.data.layout},
            {"count", c.data.count},
            {"max_samples", c.data.max_samples},
            {"eval_dataset", c.data.eval_dataset}}},
          {"output", {{"dir", c.output.dir}}}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  Section s(j, "grid");
  s.get("delta_x", g.delta_x);
  s.get("delta_y", g.delta_y);
  s.get("n_rows", g.n_rows);
  s.get("n_cols", g.n_cols);
  s.finish();
  return g;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  Section s(j, "model");
  s.get("levels", m.levels);
  s.get("heads", m.heads);
  s.get("dilations", m.dilations);
  s.get("lrdc_counts", m.lrdc_counts);
  s.get("width", m.width);
  s.get("fine_width", m.fine_width);
  s.get("in_channels", m.in_channels);
  s.get("out_channels", m.out_channels);
  s.get("reinject", m.reinject);
  s.finish();
  return m;
}

train::TrainConfig train_from_json(const json& j) {
  train::TrainConfig t;
  Section s(j, "train");
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("optimizer", t.optimizer);
  std::array<double, 2> betas{t.beta1, t.beta2};
  s.get("adam_betas", betas);
  t.beta1 = betas[0];
  t.beta2 = betas[1];
  s.get("adam_eps", t.adam_eps);
  s.get("split_ratio", t.split_ratio);
  s.get("seed", t.seed);
  s.finish();
  return t;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Section top(j, "<root>");
  if (const json* g = top.child("grid")) c.synth.grid = grid_from_json(*g);
  if (const json* r = top.child("radio")) {
    Section s(*r, "radio");
    s.get("tx_power_dbm", c.synth.radio.tx_power_dbm);
    s.get("bandwidth_hz", c.synth.radio.bandwidth_hz);
    s.get("noise_psd_dbm_hz", c.synth.radio.noise_psd_dbm_hz);
    s.get("noise_figure_db", c.synth.radio.noise_figure_db);
    s.get("carrier_hz", c.synth.radio.carrier_hz);
    s.finish();
  }
  if (const json* p = top.child("pathloss")) {
    Section s(*p, "pathloss");
    s.get("intercept_db", c.synth.pathloss.intercept_db);
    s.get("exponent", c.synth.pathloss.exponent);
    s.get("shadow_std_db", c.synth.pathloss.shadow_std_db);
    s.get("seed", c.synth.pathloss.seed);
    s.finish();
  }
  if (const json* sc = top.child("scene")) {
    Section s(*sc, "scene");
    auto& p = c.synth.scene;
    s.get("n_buildings", p.n_buildings);
    std::array<int, 2> range{p.building_size_min, p.building_size_max};
    s.get("building_size_range", range);
    p.building_size_min = range[0];
    p.building_size_max = range[1];
    s.get("n_vehicles", p.n_vehicles);
    s.get("obstacle_extra_loss_db", p.obstacle_extra_loss_db);
    s.get("rng_seed", p.rng_seed);
    s.finish();
  }
  if (const json* r = top.child("range")) {
    Section s(*r, "range");
    s.get("min_db", c.synth.range.min_db);
    s.get("max_db", c.synth.range.max_db);
    s.finish();
  }
  if (const json* m = top.child("model")) c.model = model_from_json(*m);
  if (const json* t = top.child("train")) c.train = train_from_json(*t);
  if (const json* d = top.child("data")) {
    Section s(*d, "data");
    s.get("dataset", c.data.dataset);
    s.get("layout", c.data.layout);
    s.get("count", c.data.count);
    s.get("max_samples", c.data.max_samples);
    s.get("eval_dataset", c.data.eval_dataset);
    s.finish();
  }
  if (const json* o = top.child("output")) {
    Section s(*o, "output");
    s.get("dir", c.output.dir);
    s.finish();
  }
  top.finish();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
    throw ConfigError("override key '" + path + "' must be section.key");
  const std::string section = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  if (!j.contains(section)) j[section] = json::object();
  if (!j[section].is_object()) throw ConfigError("override section '" + section + "' is not an object");
  j[section][key] = parsed;
}

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = from_json(j);
  validate(c);
  return c;
}

DatasetLayout parse_layout(const std::string& s) {
  if (s == "toolkit") return DatasetLayout::toolkit;
  if (s == "radiomapseer") return DatasetLayout::radiomapseer;
  throw ConfigError("data.layout must be \"toolkit\" or \"radiomapseer\", got \"" + s + "\"");
}

std::filesystem::path output_dir(const RunConfig& c) {
  std::filesystem::path p = c.output.dir;
  if (const char* root = std::getenv("LPCGMN_OUTPUT_ROOT"); root && *root && p.is_relative()) p = std::filesystem::path(root) / p;
  return p;
}

void validate(const RunConfig& c) {
  try {
    c.synth.grid.validate();
    c.synth.radio.validate();
    c.synth.pathloss.validate();
    c.synth.scene.validate(c.synth.grid);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(c.synth.range.max_db > c.synth.range.min_db)) throw ConfigError("range.max_db must exceed range.min_db");
  c.model.validate();
  c.train.validate();
  parse_layout(c.data.layout);
  if (c.data.count < 0) throw ConfigError("data.count must be >= 0");
  if (c.data.max_samples < 0) throw ConfigError("data.max_samples must be >= 0");
  if (c.output.dir.empty()) throw ConfigError("output.dir must not be empty");
}

}  // namespace lpcgmn::config

#include "lpcgmn/checkpoint.hpp"
#include "lpcgmn/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lpcgmn::checkpoint {
namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct Writer {
  json table = json::array();
  std::vector<float> data;

  void add(const std::string& name, const Matrix<float>& m) {
    table.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", data.size()}});
    data.insert(data.end(), m.data(), m.data() + m.size());
  }
};

json record_to_json(const train::RunRecord& r) {
  json ep = json::array();
  for (const auto& e : r.epochs)
    ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"seconds", e.seconds}});
  return {{"epochs", ep}, {"best_epoch", r.best_epoch}, {"best_val_loss", r.best_epoch >= 0 ? json(r.best_val_loss) : json(nullptr)}};
}

train::RunRecord record_from_json(const json& j) {
  train::RunRecord r;
  for (const auto& e : j.at("epochs"))
    r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                        e.at("seconds").get<double>()});
  r.best_epoch = j.at("best_epoch").get<int>();
  if (!j.at("best_val_loss").is_null()) r.best_val_loss = j.at("best_val_loss").get<double>();
  return r;
}

}  // namespace

void save(const std::filesystem::path& path, Network<float>& model, const std::string& metadata_json,
          const train::TrainerState* trainer) {
  Writer w;
  model.visit("", [&](const std::string& name, Param<float>& p) { w.add("param/" + name, p.value); });
  json header = {{"format", "lpcgmn-checkpoint"},
                 {"version", 1},
                 {"model", config::to_json(model.config())},
                 {"seed", model.seed()},
                 {"metadata", json::parse(metadata_json)}};
  if (trainer) {
    for (const auto& [name, m] : trainer->adam.m) w.add("adam.m/" + name, m);
    for (const auto& [name, v] : trainer->adam.v) w.add("adam.v/" + name, v);
    for (const auto& [name, b] : trainer->best_params) w.add("best/" + name, b);
    header["trainer"] = {{"step", trainer->adam.step},
                         {"next_epoch", trainer->next_epoch},
                         {"record", record_to_json(trainer->record)}};
  }
  header["tensors"] = w.table;
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, 8);
    const auto n = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(w.data.data()), static_cast<std::streamsize>(w.data.size() * sizeof(float)));
    if (!out) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing checkpoint: " + path.string());
  char magic[8];
  std::uint32_t n = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw LoadError("not an LPCGMN checkpoint: " + path.string());
  if (!in.read(reinterpret_cast<char*>(&n), 4)) throw LoadError("truncated checkpoint header: " + path.string());
  std::string text(n, '\0');
  if (!in.read(text.data(), n)) throw LoadError("truncated checkpoint header: " + path.string());
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(float) != 0) throw LoadError("truncated checkpoint data: " + path.string());
  std::vector<float> data(rest.size() / sizeof(float));
  if (!rest.empty()) std::memcpy(data.data(), rest.data(), rest.size());

  Checkpoint c;
  try {
    const json h = json::parse(text);
    c.model = config::model_from_json(h.at("model"));
    c.model.validate();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.metadata_json = h.value("metadata", json::object()).dump();
    std::optional<train::TrainerState> trainer;
    if (h.contains("trainer")) {
      trainer.emplace();
      const auto& t = h.at("trainer");
      trainer->adam.step = t.at("step").get<std::int64_t>();
      trainer->next_epoch = t.at("next_epoch").get<int>();
      trainer->record = record_from_json(t.at("record"));
    }
    for (const auto& e : h.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto rows = e.at("shape").at(0).get<Index>();
      const auto cols = e.at("shape").at(1).get<Index>();
      const auto off = e.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 || off + static_cast<std::size_t>(rows * cols) > data.size())
        throw LoadError("checkpoint tensor '" + name + "' lies outside the data block: " + path.string());
      Matrix<float> m = Eigen::Map<const Matrix<float>>(data.data() + off, rows, cols);
      const auto slash = name.find('/');
      const std::string kind = name.substr(0, slash);
      const std::string key = slash == std::string::npos ? std::string() : name.substr(slash + 1);
      if (kind == "param")
        c.params.emplace_back(key, std::move(m));
      else if (trainer && kind == "adam.m")
        trainer->adam.m.emplace(key, std::move(m));
      else if (trainer && kind == "adam.v")
        trainer->adam.v.emplace(key, std::move(m));
      else if (trainer && kind == "best")
        trainer->best_params.emplace_back(key, std::move(m));
      else
        throw LoadError("checkpoint has an unexpected tensor '" + name + "': " + path.string());
    }
    c.trainer = std::move(trainer);
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint " + path.string() + " has an invalid model config: " + e.what());
  }
  return c;
}

Network<float> instantiate(const Checkpoint& ckpt) {
  Network<float> net(ckpt.model, ckpt.seed);
  train::restore(net, ckpt.params);
  return net;
}

}  // namespace lpcgmn::checkpoint

#include "lpcgmn/cli.hpp"

#include "lpcgmn/checkpoint.hpp"
#include "lpcgmn/config.hpp"
#include "lpcgmn/pyramid.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace lpcgmn::cli {
namespace {

namespace fs = std::filesystem;
using config::json;
using config::RunConfig;

std::string sig6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string full(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

fs::path prepare_output(const RunConfig& c) {
  const fs::path dir = config::output_dir(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "config.json", config::to_json(c).dump(2) + "\n");
  return dir;
}

std::vector<DatasetPair> load_pairs(const std::string& root, const RunConfig& c) {
  if (root.empty()) throw ConfigError("no dataset path configured (data.dataset)");
  return load_dataset(root, config::parse_layout(c.data.layout), static_cast<std::size_t>(c.data.max_samples));
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("-c,--config", common.config_path, "JSON run configuration");
  sub->add_option("--set", common.overrides, "Override a config value: section.key=value")->take_all();
}

// ---------------------------------------------------------------------------

int cmd_datagen(const RunConfig& c, std::ostream& out) {
  const fs::path dir = prepare_output(c);
  const fs::path root = c.data.dataset;
  ToolkitManifest m;
  m.min_db = c.synth.range.min_db;
  m.max_db = c.synth.range.max_db;
  m.frequency_hz = c.synth.radio.carrier_hz;
  m.grid = c.synth.grid;
  m.generator_json = synth::to_json(c.synth);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<DatasetPair> pairs;
  pairs.reserve(static_cast<std::size_t>(c.data.count));
  for (int i = 0; i < c.data.count; ++i) {
    pairs.push_back(synth::generate_pair(c.synth, static_cast<std::uint64_t>(i)));
    synth::quantize_8bit(pairs.back());
  }
  save_toolkit_dataset(root, m, pairs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "wrote " << pairs.size() << " pairs (" << c.synth.grid.n_rows << "x" << c.synth.grid.n_cols << ") to "
      << root.string() << " in " << sig6(secs) << " s\n";
  out << "config copied to " << (dir / "config.json").string() << "\n";
  return kOk;
}

int cmd_analyze(const RunConfig& c, const std::string& a_path, const std::string& b_path, int levels, bool bands,
                std::ostream& out) {
  const Eigen::MatrixXd a = read_png_gray(a_path);
  const Eigen::MatrixXd b = read_png_gray(b_path);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("analyze: images differ in shape (" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  pyramid::check_divisible(a.rows(), a.cols(), levels);
  const fs::path dir = prepare_output(c);
  const auto report = pyramid::band_compare<double>(a, b, levels);
  write_text(dir / "band_report.json", pyramid::to_json(report) + "\n");
  out << std::left << std::setw(6) << "band" << std::setw(10) << "shape" << std::setw(14) << "MSE" << std::setw(14) << "SSIM"
      << "PSNR [dB]\n";
  for (const auto& bm : report.bands)
    out << std::setw(6) << bm.name << std::setw(10) << (std::to_string(bm.rows) + "x" + std::to_string(bm.cols)) << std::setw(14)
        << sig6(bm.mse) << std::setw(14) << sig6(bm.ssim) << sig6(bm.psnr) << "\n";
  out << "low band dominant: " << (report.low_band_dominant() ? "yes" : "no") << "\n";
  if (bands) {
    const auto pa = pyramid::decompose<double>(a, levels);
    const auto pb = pyramid::decompose<double>(b, levels);
    // Residuals are signed; they are shown around mid-gray.
    for (int l = 0; l < levels; ++l) {
      const auto i = static_cast<std::size_t>(l);
      write_png_gray(dir / ("a_r" + std::to_string(l) + ".png"), (pa.residuals[i].array() + 0.5).matrix());
      write_png_gray(dir / ("b_r" + std::to_string(l) + ".png"), (pb.residuals[i].array() + 0.5).matrix());
    }
    write_png_gray(dir / "a_base.png", pa.base);
    write_png_gray(dir / "b_base.png", pb.base);
  }
  out << "report written to " << (dir / "band_report.json").string() << "\n";
  return kOk;
}

std::string epoch_csv_row(const train::EpochRecord& e) {
  return std::to_string(e.epoch) + "," + full(e.train_loss) + "," + full(e.val_loss) + "," + full(e.seconds) + "\n";
}

int cmd_train(const RunConfig& c, const std::string& resume, std::ostream& out) {
  const auto pairs = load_pairs(c.data.dataset, c);
  if (pairs.size() < 3) throw ConfigError("dataset " + c.data.dataset + " has fewer than 3 samples");
  const fs::path dir = prepare_output(c);
  const auto examples = train::make_examples(pairs, c.model.in_channels);
  const auto sp = train::split(examples.size(), c.train.split_ratio, c.train.seed);
  const auto tr = train::select(examples, sp.train);
  const auto va = train::select(examples, sp.val);
  const auto te = train::select(examples, sp.test);
  out << "dataset " << c.data.dataset << ": " << tr.size() << " train / " << va.size() << " val / " << te.size() << " test\n";

  Network<float> model(c.model, c.train.seed);
  train::TrainerState state;
  if (!resume.empty()) {
    auto ck = checkpoint::read(resume);
    if (!(ck.model == c.model)) throw ConfigError("checkpoint " + resume + " was trained with a different model config");
    if (!ck.trainer) throw ConfigError("checkpoint " + resume + " holds no trainer state to resume from");
    model = checkpoint::instantiate(ck);
    state = std::move(*ck.trainer);
    out << "resuming at epoch " << state.next_epoch << "\n";
  }
  const auto costs = count_costs(c.model, tr.front().input.height, tr.front().input.width);
  out << "model: " << costs.params << " parameters, " << sig6(double(costs.macs)) << " MACs per forward\n";

  const fs::path csv = dir / "epochs.csv";
  {
    std::string text = "epoch,train_loss,val_loss,seconds\n";
    for (const auto& e : state.record.epochs) text += epoch_csv_row(e);
    write_text(csv, text);
  }
  const std::string meta = json{{"dataset", c.data.dataset}, {"train_seed", c.train.seed}}.dump();
  auto on_epoch = [&](const train::TrainerState& s, Network<float>& m) {
    const auto& e = s.record.epochs.back();
    std::ofstream(csv, std::ios::app) << epoch_csv_row(e);
    out << "epoch " << std::setw(4) << e.epoch << "  train " << sig6(e.train_loss) << "  val " << sig6(e.val_loss) << "  "
        << sig6(e.seconds) << " s\n"
        << std::flush;
    checkpoint::save(dir / "last.ckpt", m, meta, &s);
  };
  auto record = train::fit(model, tr, va, c.train, state, on_epoch);
  checkpoint::save(dir / "best.ckpt", model, meta);
  if (!te.empty()) {
    record.test = train::evaluate(model, te);
    record.has_test = true;
    out << "best epoch " << record.best_epoch << " (val " << sig6(record.best_val_loss) << "), test:\n"
        << metrics::to_table(record.test);
  }
  write_text(dir / "run_record.json", record.to_json() + "\n");
  return kOk;
}

int cmd_eval(const RunConfig& c, const std::string& ckpt_path, const std::string& dataset, bool zero_shot,
             std::ostream& out) {
  if (ckpt_path.empty()) throw ConfigError("eval needs --checkpoint");
  if (!fs::exists(ckpt_path)) throw ConfigError("missing checkpoint: " + ckpt_path);
  const auto ck = checkpoint::read(ckpt_path);
  auto model = checkpoint::instantiate(ck);
  std::string root = !dataset.empty() ? dataset : c.data.eval_dataset;
  std::vector<train::Example> data;
  std::string scope;
  if (!root.empty()) {
    data = train::make_examples(load_pairs(root, c), ck.model.in_channels);
    scope = root + " (all samples)";
  } else {
    if (zero_shot) throw ConfigError("--zero-shot needs a dataset (--dataset or data.eval_dataset)");
    const auto all = train::make_examples(load_pairs(c.data.dataset, c), ck.model.in_channels);
    const auto sp = train::split(all.size(), c.train.split_ratio, c.train.seed);
    data = train::select(all, sp.test);
    scope = c.data.dataset + " (test split)";
  }
  if (data.empty()) throw ConfigError("no samples to evaluate in " + scope);
  const fs::path dir = prepare_output(c);
  const auto report = zero_shot ? train::zero_shot(model, data) : train::evaluate(model, data);
  write_text(dir / "metrics.json", metrics::to_json(report) + "\n");
  out << (zero_shot ? "zero-shot " : "") << "evaluation on " << scope << ":\n" << metrics::to_table(report);
  return kOk;
}

std::vector<int> parse_list(const std::string& s, const char* what) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("invalid ") + what + " list '" + s + "'");
    }
  }
  if (v.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return v;
}

int cmd_bench(const RunConfig& c, const std::string& levels_s, const std::string& heads_s, int size, int time_reps,
              std::ostream& out) {
  const auto levels = parse_list(levels_s, "levels");
  const auto heads = parse_list(heads_s, "heads");
  const Index h = size > 0 ? size : c.synth.grid.n_rows;
  const Index w = size > 0 ? size : c.synth.grid.n_cols;
  // Validate the whole sweep before any work.
  for (int L : levels)
    for (int I : heads) {
      ModelConfig m = c.model;
      m.levels = L;
      m.heads = I;
      m.validate();
      pyramid::check_divisible(h, w, L);
    }
  const fs::path dir = prepare_output(c);
  std::ostringstream csv;
  csv << "# cost sweep, input " << h << "x" << w << ", width " << c.model.width << ", fine width "
      << c.model.resolved_fine_width() << "; flops counts multiply-accumulates of one forward pass\n"
      << "# published reference at 256x256: Wnet 94.16 GFLOPs; LPCGMN L=3 I=1 6.16 GFLOPs\n"
      << "levels,heads,params,flops,gflops,forward_seconds\n";
  out << std::left << std::setw(8) << "levels" << std::setw(7) << "heads" << std::setw(12) << "params" << std::setw(14)
      << "GFLOPs" << "forward [s]\n";
  for (int L : levels)
    for (int I : heads) {
      ModelConfig m = c.model;
      m.levels = L;
      m.heads = I;
      const auto costs = count_costs(m, h, w);
      double secs = 0.0;
      if (time_reps > 0) {
        Network<float> net(m, c.train.seed);
        FeatureMap<float> x(h, w, m.in_channels);
        Rng rng(1);
        for (Index i = 0; i < x.data.size(); ++i) x.data(i) = static_cast<float>(rng.uniform());
        secs = std::numeric_limits<double>::infinity();
        for (int r = 0; r < time_reps; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          (void)net.predict(x);
          secs = std::min(secs, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
      }
      const double gflops = double(costs.macs) / 1e9;
      csv << L << "," << I << "," << costs.params << "," << costs.macs << "," << full(gflops) << "," << full(secs) << "\n";
      out << std::setw(8) << L << std::setw(7) << I << std::setw(12) << costs.params << std::setw(14) << sig6(gflops)
          << (time_reps > 0 ? sig6(secs) : std::string("-")) << "\n";
    }
  out << "published reference at 256x256: Wnet 94.16 GFLOPs, LPCGMN L=3 I=1 6.16 GFLOPs\n";
  write_text(dir / "bench.csv", csv.str());
  out << "table written to " << (dir / "bench.csv").string() << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Channel gain map construction with a Laplacian-pyramid network", "lpcgmn"};
  app.require_subcommand(1);

  Common common;
  auto* datagen = app.add_subcommand("datagen", "Generate a synthetic dataset in toolkit layout");
  add_common(datagen, common);
  int count = -1;
  std::string dataset_out;
  datagen->add_option("-n,--count", count, "Number of pairs (overrides data.count)");
  datagen->add_option("-o,--out", dataset_out, "Dataset root (overrides data.dataset)");

  auto* analyze = app.add_subcommand("analyze", "Per-band pyramid comparison of two grayscale images");
  add_common(analyze, common);
  std::string a_path, b_path;
  int levels = 2;
  bool bands = false;
  analyze->add_option("a", a_path, "First image (PNG)")->required();
  analyze->add_option("b", b_path, "Second image (PNG)")->required();
  analyze->add_option("-L,--levels", levels, "Pyramid levels");
  analyze->add_flag("--bands", bands, "Also write per-band images");

  auto* trainc = app.add_subcommand("train", "Train a model on data.dataset");
  add_common(trainc, common);
  std::string resume;
  trainc->add_option("--resume", resume, "Continue from a last.ckpt");

  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(evalc, common);
  std::string ckpt, eval_dataset;
  bool zero_shot = false;
  evalc->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  evalc->add_option("--dataset", eval_dataset, "Dataset to score (default: data.eval_dataset, else the test split)");
  evalc->add_flag("--zero-shot", zero_shot, "Score a dataset the model was not trained on");

  auto* bench = app.add_subcommand("bench", "Parameter / FLOP sweep over L x I");
  add_common(bench, common);
  std::string levels_s = "1,2,3,4,5", heads_s = "1,2,4";
  int size = 0, time_reps = 0;
  bench->add_option("--levels", levels_s, "Comma-separated L values");
  bench->add_option("--heads", heads_s, "Comma-separated I values");
  bench->add_option("--size", size, "Square input size (default: grid size)");
  bench->add_option("--time", time_reps, "Measure forward time, best of N runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    std::vector<std::string> overrides = common.overrides;
    if (datagen->parsed()) {
      if (count >= 0) overrides.push_back("data.count=" + std::to_string(count));
      if (!dataset_out.empty()) overrides.push_back("data.dataset=" + json(dataset_out).dump());
    }
    const RunConfig c = config::load(common.config_path, overrides);
    if (datagen->parsed()) return cmd_datagen(c, out);
    if (analyze->parsed()) return cmd_analyze(c, a_path, b_path, levels, bands, out);
    if (trainc->parsed()) return cmd_train(c, resume, out);
    if (evalc->parsed()) return cmd_eval(c, ckpt, eval_dataset, zero_shot, out);
    if (bench->parsed()) return cmd_bench(c, levels_s, heads_s, size, time_reps, out);
  } catch (const train::NonFiniteLoss& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace lpcgmn::cli

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "abda/boundary.hpp"
#include "abda/checkpoint.hpp"
#include "abda/dataset_io.hpp"
#include "abda/eval.hpp"
#include "abda/gradcheck.hpp"
#include "abda/synthdata.hpp"
#include "abda/trainer.hpp"

namespace fs = std::filesystem;
using namespace abda;

namespace {

trainer::TrainConfig load_config(const std::string& config_path,
                                 std::optional<std::uint64_t> seed) {
  trainer::TrainConfig cfg;
  if (!config_path.empty()) cfg = trainer::TrainConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

std::vector<SceneSample> make_samples(std::uint64_t seed, int count, int height,
                                      int width, double contrast) {
  synthdata::SampleOptions opts;
  opts.contrast = contrast;
  std::vector<SceneSample> samples;
  samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    samples.push_back(synthdata::make_sample(seed * 100000 + static_cast<std::uint64_t>(i),
                                             height, width, opts));
  return samples;
}

// simple bar chart of a histogram, black bars on white
Image render_histogram(const std::vector<long>& counts) {
  int bins = static_cast<int>(counts.size());
  int bar_w = 8, H = 128, W = bins * bar_w;
  long peak = 1;
  for (long c : counts) peak = std::max(peak, c);
  Image img(1, H, W);
  img.data.fill(1.0);
  for (int b = 0; b < bins; ++b) {
    int h = static_cast<int>(static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                             static_cast<double>(peak) * (H - 2));
    for (int y = H - 1; y >= H - h; --y)
      for (int x = b * bar_w; x < (b + 1) * bar_w - 1; ++x)
        img.data.at(0, y, x) = 0.0;
  }
  return img;
}

int cmd_synth(const std::string& out, int samples, int height, int width,
              const std::string& config, std::optional<std::uint64_t> seed) {
  trainer::TrainConfig cfg = load_config(config, seed);
  auto set = make_samples(cfg.seed, samples, height, width, cfg.contrast);
  dataset::write_dataset(set, out);
  std::cout << "wrote " << set.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_train(int stage, const std::string& data, const std::string& out,
              const std::string& init, const std::string& config,
              const std::string& log_csv, std::optional<std::uint64_t> seed) {
  trainer::TrainConfig cfg = load_config(config, seed);
  cfg.validate();
  auto samples = dataset::read_dataset(data);
  trainer::StageOptions opts;
  if (!log_csv.empty()) opts.log_csv = log_csv;
  ckpt::Checkpoint result;
  if (stage == 1) {
    result = trainer::stage1(samples, cfg, opts);
  } else {
    if (init.empty())
      throw std::invalid_argument("train: stage " + std::to_string(stage) +
                                  " requires --init with the previous checkpoint");
    ckpt::Checkpoint prev = ckpt::Checkpoint::load(init);
    result = stage == 2 ? trainer::stage2(samples, prev, cfg, opts)
                        : trainer::stage3(samples, prev, cfg, opts);
  }
  result.save(out);
  std::cout << "stage " << stage << " checkpoint written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt_path,
             const std::string& out, const std::string& config,
             std::optional<std::uint64_t> seed) {
  ckpt::Checkpoint c = ckpt::Checkpoint::load(ckpt_path);
  trainer::TrainConfig cfg = config.empty()
                                 ? trainer::TrainConfig::from_text(c.config_text)
                                 : load_config(config, seed);
  auto samples = dataset::read_dataset(data);
  eval::EvalReport report = trainer::evaluate(c, cfg, samples);
  fs::path json_path(out);
  report.write_json(json_path);
  fs::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  report.write_csv(csv_path);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_viz(const std::string& data, const std::string& ckpt_path,
            const std::string& out, const std::string& config,
            std::optional<std::uint64_t> seed) {
  auto samples = dataset::read_dataset(data);
  std::optional<trainer::Models> models;
  trainer::TrainConfig cfg;
  if (!ckpt_path.empty()) {
    ckpt::Checkpoint c = ckpt::Checkpoint::load(ckpt_path);
    cfg = config.empty() ? trainer::TrainConfig::from_text(c.config_text)
                         : load_config(config, seed);
    models.emplace(cfg);
    models->load(c);
  } else {
    cfg = load_config(config, seed);
  }
  fs::create_directories(out);
  for (const SceneSample& s : samples) {
    fs::path dir = fs::path(out) / s.id;
    fs::create_directories(dir);
    dataset::write_png16(eval::flow_to_color(s.gt_flow), dir / "gt_flow.png");
    FlowField flow = s.gt_flow;
    if (models) {
      flow = trainer::infer_night(*models, s);
      dataset::write_png16(eval::flow_to_color(flow), dir / "night_flow.png");
      dataset::write_flo(flow, dir / "night_flow.flo");
    }
    Tensor dl_ev = synthdata::accumulate_events(s.events, s.t0, s.t1);
    Tensor st = boundary::image_st_gradient(s.night_t.data, flow.data);
    Tensor corr = boundary::correlation_map(dl_ev, st);
    dataset::write_map_png16(corr, 1.0, dir / "correlation.png");
    auto [edges, counts] = boundary::correlation_histogram(corr, 20);
    std::ofstream hist(dir / "correlation_hist.csv");
    if (!hist) throw IoError("cannot write " + (dir / "correlation_hist.csv").string());
    hist << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
      hist << edges[b] << "," << edges[b + 1] << "," << counts[b] << "\n";
    dataset::write_png16(render_histogram(counts), dir / "correlation_hist.png");
  }
  std::cout << "viz artifacts for " << samples.size() << " samples in " << out << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& out, std::optional<std::uint64_t> seed) {
  gradcheck::Options opts;
  if (seed) opts.seed = *seed;
  auto results = gradcheck::run_all(opts);
  std::ostringstream report;
  bool all_pass = true;
  for (const auto& r : results) {
    report << (r.pass ? "PASS" : "FAIL") << "  " << r.name
           << "  max_rel_err=" << r.max_rel_err << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << report.str();
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << report.str();
  }
  if (!all_pass) throw std::runtime_error("gradcheck: some checks failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"appearance-boundary adaptation for nighttime optical flow"};
  app.require_subcommand(1);

  std::string config, out, data, init, ckpt_path, log_csv;
  std::optional<std::uint64_t> seed;
  int samples = 20, height = 64, width = 64, stage = 1;

  auto add_common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", config, "key = value config file");
    sub->add_option("--seed", seed, "seed override");
    auto* o = sub->add_option("--out", out, "output path");
    if (out_required) o->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, true);
  synth->add_option("--samples", samples, "sample count");
  synth->add_option("--height", height, "frame height");
  synth->add_option("--width", width, "frame width");

  CLI::App* train = app.add_subcommand("train", "run one training stage");
  add_common(train, true);
  train->add_option("--stage", stage, "training stage")
      ->required()
      ->check(CLI::Range(1, 3));
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--init", init, "previous-stage checkpoint");
  train->add_option("--log", log_csv, "per-epoch CSV log path");

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(evalc, true);
  evalc->add_option("--data", data, "dataset directory")->required();
  evalc->add_option("--ckpt", ckpt_path, "checkpoint path")->required();

  CLI::App* viz = app.add_subcommand("viz", "write visualization artifacts");
  add_common(viz, true);
  viz->add_option("--data", data, "dataset directory")->required();
  viz->add_option("--ckpt", ckpt_path, "checkpoint path (optional)");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference suites");
  add_common(gc, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors -> 2, --help -> 0
  }

  try {
    if (synth->parsed()) return cmd_synth(out, samples, height, width, config, seed);
    if (train->parsed()) return cmd_train(stage, data, out, init, config, log_csv, seed);
    if (evalc->parsed()) return cmd_eval(data, ckpt_path, out, config, seed);
    if (viz->parsed()) return cmd_viz(data, ckpt_path, out, config, seed);
    if (gc->parsed()) return cmd_gradcheck(out, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// Acceptance gate: runs the eight release criteria end to end and prints a
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.
// argv[1] must be the path to the abda CLI binary.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abda/appearance.hpp"
#include "abda/boundary.hpp"
#include "abda/eval.hpp"
#include "abda/flowcore.hpp"
#include "abda/gradcheck.hpp"
#include "abda/rng.hpp"
#include "abda/synthdata.hpp"
#include "abda/trainer.hpp"

namespace fs = std::filesystem;
using namespace abda;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool pass,
            const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << criterion << " ("
            << what << "): " << detail << "\n"
            << std::flush;
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor rnd(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// ---- criterion 1: gradient suite ----

void criterion1() {
  auto t0 = Clock::now();
  auto results = gradcheck::run_all({});
  double elapsed = seconds_since(t0);
  bool all = !results.empty();
  double worst = 0.0;
  for (const auto& r : results) {
    all = all && r.pass;
    worst = std::max(worst, r.max_rel_err);
  }
  std::ostringstream d;
  d << results.size() << " checks, max rel err " << worst << ", " << elapsed
    << " s";
  report(1, "gradient suite", all && elapsed < 120.0, d.str());
}

// ---- criterion 2: brute-force oracles ----

double oracle_cost_volume(Rng& rng) {
  int C = 2 + rng.uniform_int(3), H = 4 + rng.uniform_int(3);
  int W = 4 + rng.uniform_int(3), r = 1 + rng.uniform_int(2);
  Tensor f = rnd({C, H, W}, rng), g = rnd({C, H, W}, rng);
  Tensor cv = flowcore::cost_volume(f, g, r);
  double worst = 0.0;
  int side = 2 * r + 1;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          int yy = y + dy, xx = x + dx;
          double want = -1.0;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W) {
            want = 0.0;
            for (int c = 0; c < C; ++c) want += f.at(c, y, x) * g.at(c, yy, xx);
          }
          int ch = (dy + r) * side + (dx + r);
          worst = std::max(worst, std::abs(cv.at(ch, y, x) - want));
        }
  return worst;
}

double oracle_warp(Rng& rng) {
  int H = 5 + rng.uniform_int(4), W = 5 + rng.uniform_int(4);
  Tensor img = rnd({1, H, W}, rng, 0, 1);
  Tensor flow = rnd({2, H, W}, rng, -2.5, 2.5);
  Tensor out = flowcore::warp(img, flow);
  double worst = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double sx = x + flow.at(0, y, x), sy = y + flow.at(1, y, x);
      sx = std::min(std::max(sx, 0.0), W - 1.0);
      sy = std::min(std::max(sy, 0.0), H - 1.0);
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      double fx = sx - x0, fy = sy - y0;
      double want = (1 - fy) * ((1 - fx) * img.at(0, y0, x0) + fx * img.at(0, y0, x1)) +
                    fy * ((1 - fx) * img.at(0, y1, x0) + fx * img.at(0, y1, x1));
      worst = std::max(worst, std::abs(out.at(0, y, x) - want));
    }
  return worst;
}

double oracle_epe_fl(Rng& rng) {
  int H = 4 + rng.uniform_int(4), W = 4 + rng.uniform_int(4);
  FlowField gt(H, W), flow(H, W);
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    gt.data[i] = rng.uniform(-6, 6);
    flow.data[i] = rng.uniform(-6, 6);
  }
  Tensor valid({1, H, W});
  for (std::size_t i = 0; i < valid.size(); ++i)
    valid[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
  if (valid.sum() == 0.0) valid[0] = 1.0;
  double acc = 0.0, bad = 0.0, n = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (valid.at(0, y, x) != 1.0) continue;
      double err = std::hypot(flow.u(y, x) - gt.u(y, x), flow.v(y, x) - gt.v(y, x));
      double mag = std::hypot(gt.u(y, x), gt.v(y, x));
      acc += err;
      if (err > 3.0 && err > 0.05 * mag) bad += 1.0;
      n += 1.0;
    }
  double e1 = std::abs(eval::epe(flow, gt, valid) - acc / n);
  double e2 = std::abs(eval::fl_all(flow, gt, valid) - 100.0 * bad / n);
  return std::max(e1, e2);
}

double oracle_masked_l1(Rng& rng) {
  int H = 4 + rng.uniform_int(4), W = 4 + rng.uniform_int(4);
  Tensor fn = rnd({2, H, W}, rng, -3, 3), fe = rnd({2, H, W}, rng, -3, 3);
  Tensor mask({1, H, W});
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  if (mask.sum() == 0.0) mask[0] = 1.0;
  double num = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      num += mask.at(0, y, x) * (std::abs(fn.at(0, y, x) - fe.at(0, y, x)) +
                                 std::abs(fn.at(1, y, x) - fe.at(1, y, x)));
  double got =
      boundary::motion_consistency_loss(ad::constant(fn), fe, mask)->val.item();
  return std::abs(got - num / mask.sum());
}

double oracle_kl(Rng& rng) {
  int C = 3 + rng.uniform_int(4), H = 2 + rng.uniform_int(3);
  int W = 2 + rng.uniform_int(3);
  Tensor a = rnd({C, H, W}, rng, -2, 2), b = rnd({C, H, W}, rng, -2, 2);
  double want = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double za = 0.0, zb = 0.0;
      for (int c = 0; c < C; ++c) {
        za += std::exp(a.at(c, y, x));
        zb += std::exp(b.at(c, y, x));
      }
      for (int c = 0; c < C; ++c) {
        double p = std::exp(a.at(c, y, x)) / za;
        double q = std::exp(b.at(c, y, x)) / zb;
        want += p * std::log(p / q);
      }
    }
  want /= static_cast<double>(H * W);
  double got = appearance::kl_cost_loss(ad::constant(a), ad::constant(b))->val.item();
  return std::abs(got - want);
}

double oracle_histogram(Rng& rng) {
  int H = 4 + rng.uniform_int(6), W = 4 + rng.uniform_int(6);
  int bins = 2 + rng.uniform_int(10);
  Tensor m = rnd({1, H, W}, rng, 0, 1);
  auto [edges, counts] = boundary::correlation_histogram(m, bins);
  std::vector<long> want(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    int b = std::min(static_cast<int>(m[i] * bins), bins - 1);
    ++want[static_cast<std::size_t>(b)];
  }
  double worst = 0.0;
  long total = 0;
  for (int b = 0; b < bins; ++b) {
    worst = std::max(worst, std::abs(static_cast<double>(
                                counts[static_cast<std::size_t>(b)] -
                                want[static_cast<std::size_t>(b)])));
    total += counts[static_cast<std::size_t>(b)];
  }
  if (total != H * W) worst = 1.0;
  return worst;
}

void criterion2() {
  struct Suite {
    const char* name;
    double (*fn)(Rng&);
  };
  Suite suites[] = {{"cost_volume", oracle_cost_volume},
                    {"warp", oracle_warp},
                    {"epe_fl", oracle_epe_fl},
                    {"masked_l1", oracle_masked_l1},
                    {"kl", oracle_kl},
                    {"histogram", oracle_histogram}};
  double worst = 0.0;
  for (const Suite& s : suites)
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed * 131 + 7);
      worst = std::max(worst, s.fn(rng));
    }
  std::ostringstream d;
  d << "6 oracles x 100 seeds, max abs err " << worst;
  report(2, "oracle suite", worst <= 1e-6, d.str());
}

// ---- criterion 3: event quantization bound ----

void criterion3() {
  long pixels = 0, within = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synthdata::SampleOptions opts;
    SceneSample s = synthdata::make_sample(3000 + seed, 48, 48, opts);
    Tensor acc = synthdata::accumulate_events(s.events, s.t0, s.t1);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        double dlog = std::log(s.frame_t1.data.at(0, y, x) + synthdata::kLogEps) -
                      std::log(s.frame_t.data.at(0, y, x) + synthdata::kLogEps);
        ++pixels;
        if (std::abs(acc.at(0, y, x) - dlog) <= opts.contrast + 1e-12) ++within;
      }
  }
  std::ostringstream d;
  d << within << "/" << pixels << " pixels within C";
  report(3, "event round trip", within == pixels, d.str());
}

// ---- criterion 4: event/image spatiotemporal-gradient equivalence ----

void criterion4() {
  double worst = 0.0;
  struct Shift {
    double tx, ty;
  };
  Shift shifts[] = {{2.0, 0.0}, {0.0, -2.0}, {1.5, 1.0}, {-1.0, 1.5}};
  int idx = 0;
  for (const Shift& sh : shifts) {
    synthdata::SampleOptions opts;
    opts.motion.exact_translation = true;
    opts.motion.tx = sh.tx;
    opts.motion.ty = sh.ty;
    opts.noise.sigma = 0.0;
    opts.gen.quantize = false;
    SceneSample s = synthdata::make_sample(4000 + static_cast<std::uint64_t>(idx++),
                                           64, 64, opts);
    Tensor dl_ev = synthdata::accumulate_events(s.events, s.t0, s.t1);
    Tensor st = boundary::image_st_gradient(s.frame_t, s.gt_flow);
    double acc = 0.0;
    for (std::size_t i = 0; i < st.size(); ++i) acc += std::abs(dl_ev[i] - st[i]);
    worst = std::max(worst, acc / static_cast<double>(st.size()));
  }
  double bound = 0.15 + 0.05;
  std::ostringstream d;
  d << "worst mean |dL_ev - st_grad| = " << worst << " (bound " << bound << ")";
  report(4, "gradient equivalence", worst <= bound, d.str());
}

// ---- criterion 5: adaptation effect on the 200-sample benchmark ----

void criterion5() {
  auto t0 = Clock::now();
  std::vector<SceneSample> train, holdout;
  for (std::uint64_t i = 0; i < 200; ++i) {
    SceneSample s = synthdata::make_sample(770000 + i, 64, 64);
    (i < 160 ? train : holdout).push_back(std::move(s));
  }
  trainer::TrainConfig cfg;
  cfg.seed = 1;

  ckpt::Checkpoint c1 = trainer::stage1(train, cfg);
  eval::EvalReport r1 = trainer::evaluate(c1, cfg, holdout);
  std::cout << "  stage1: night EPE " << r1.mean_epe_night << ", day EPE "
            << r1.mean_epe_day << "\n" << std::flush;

  ckpt::Checkpoint c2 = trainer::stage2(train, c1, cfg);
  eval::EvalReport r2 = trainer::evaluate(c2, cfg, holdout);
  std::cout << "  stage2: night EPE " << r2.mean_epe_night << ", boundary EPE "
            << r2.boundary_epe_night << "\n" << std::flush;

  // stage 3 runs on its own schedule: smaller steps, more epochs
  trainer::TrainConfig cfg3 = cfg;
  cfg3.lr = 5e-4;
  cfg3.epochs_stage3 = 8;
  ckpt::Checkpoint c3 = trainer::stage3(train, c2, cfg3);
  eval::EvalReport r3 = trainer::evaluate(c3, cfg3, holdout);
  std::cout << "  stage3: night EPE " << r3.mean_epe_night << ", boundary EPE "
            << r3.boundary_epe_night << "\n" << std::flush;

  double elapsed = seconds_since(t0);
  bool order = r3.mean_epe_night <= r2.mean_epe_night &&
               r2.mean_epe_night <= r1.mean_epe_night;
  bool gain2 = r2.mean_epe_night <= 0.8 * r1.mean_epe_night;
  bool gain3 = r3.boundary_epe_night < r2.boundary_epe_night;
  bool timed = elapsed <= 1800.0;
  std::ostringstream d;
  d << "night EPE " << r1.mean_epe_night << " -> " << r2.mean_epe_night
    << " -> " << r3.mean_epe_night << "; boundary " << r2.boundary_epe_night
    << " -> " << r3.boundary_epe_night << "; " << elapsed << " s"
    << (order ? "" : " [order violated]")
    << (gain2 ? "" : " [stage2 gain < 20%]")
    << (gain3 ? "" : " [no boundary gain]") << (timed ? "" : " [over 30 min]");
  report(5, "adaptation effect", order && gain2 && gain3 && timed, d.str());
}

// ---- criterion 6: KL properties ----

void criterion6() {
  Rng rng(606);
  bool ok = true;
  double worst_neg = 0.0, worst_same = 0.0, worst_shift = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Tensor a = rnd({5, 2, 2}, rng, -3, 3), b = rnd({5, 2, 2}, rng, -3, 3);
    double kl1 = appearance::kl_cost_loss(ad::constant(a), ad::constant(b))->val.item();
    Tensor z({5, 2, 2});
    double kl2 = appearance::inter_align_loss(ad::constant(a), ad::constant(z),
                                              ad::constant(b), ad::constant(z))
                     ->val.item();
    worst_neg = std::min(worst_neg, std::min(kl1, kl2));

    double same =
        appearance::kl_cost_loss(ad::constant(a), ad::constant(a))->val.item();
    worst_same = std::max(worst_same, std::abs(same));

    if (i < 100) {
      Tensor a2 = a, b2 = b;
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
          double ca = rng.uniform(-4, 4), cb = rng.uniform(-4, 4);
          for (int c = 0; c < 5; ++c) {
            a2.at(c, y, x) += ca;
            b2.at(c, y, x) += cb;
          }
        }
      double shifted =
          appearance::kl_cost_loss(ad::constant(a2), ad::constant(b2))->val.item();
      worst_shift = std::max(worst_shift, std::abs(shifted - kl1));
    }
  }
  ok = worst_neg >= -1e-7 && worst_same <= 1e-7 && worst_shift <= 1e-7;
  std::ostringstream d;
  d << "min value " << worst_neg << ", identical " << worst_same
    << ", shift drift " << worst_shift;
  report(6, "KL properties", ok, d.str());
}

// ---- criteria 7 and 8: CLI determinism and end-to-end contract ----

int run(const std::string& cmd) {
  int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void criteria7and8(const std::string& abda) {
  fs::path root = fs::temp_directory_path() / "abda_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  fs::path data = root / "data";
  fs::path log = root / "cli.log";
  std::string quiet = " >> " + log.string() + " 2>&1";

  auto t0 = Clock::now();
  bool ok8 = run(abda + " synth --samples 20 --seed 5 --out " + data.string() +
                 quiet) == 0;

  auto pipeline = [&](const std::string& tag) -> fs::path {
    fs::path dir = root / tag;
    fs::create_directories(dir);
    std::string c1 = (dir / "s1.ckpt").string();
    std::string c2 = (dir / "s2.ckpt").string();
    std::string c3 = (dir / "s3.ckpt").string();
    bool ok = true;
    ok = ok && run(abda + " train --stage 1 --data " + data.string() +
                   " --seed 5 --out " + c1 + quiet) == 0;
    ok = ok && run(abda + " train --stage 2 --data " + data.string() +
                   " --init " + c1 + " --seed 5 --out " + c2 + quiet) == 0;
    ok = ok && run(abda + " train --stage 3 --data " + data.string() +
                   " --init " + c2 + " --seed 5 --out " + c3 + quiet) == 0;
    fs::path rpt = dir / "report.json";
    ok = ok && run(abda + " eval --data " + data.string() + " --ckpt " + c3 +
                   " --out " + rpt.string() + quiet) == 0;
    return ok ? rpt : fs::path{};
  };

  fs::path r_a = pipeline("run_a");
  ok8 = ok8 && !r_a.empty();
  ok8 = ok8 && run(abda + " viz --data " + data.string() + " --ckpt " +
                   (root / "run_a" / "s3.ckpt").string() + " --out " +
                   (root / "viz").string() + quiet) == 0;
  double pipeline_s = seconds_since(t0);

  bool schema = false;
  if (ok8) {
    try {
      auto j = nlohmann::json::parse(slurp(r_a));
      std::set<std::string> keys;
      for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
      schema = keys == std::set<std::string>{
                           "schema_version", "sample_count", "mean_epe_night",
                           "fl_all_night", "boundary_epe_night", "mean_epe_day",
                           "fl_all_day", "mean_epe_event", "per_sample"} &&
               j["schema_version"] == 1 && j["sample_count"] == 20;
    } catch (...) {
      schema = false;
    }
  }

  fs::path r_b = pipeline("run_b");
  bool identical = !r_a.empty() && !r_b.empty() && slurp(r_a) == slurp(r_b) &&
                   !slurp(r_a).empty();
  std::ostringstream d7;
  d7 << "two seeded pipelines, reports "
     << (identical ? "bytewise identical" : "differ");
  report(7, "determinism", identical, d7.str());

  std::ostringstream d8;
  d8 << "synth+train(x3)+eval+viz on 20 samples in " << pipeline_s << " s, schema "
     << (schema ? "valid" : "invalid");
  report(8, "CLI contract", ok8 && schema && pipeline_s < 600.0, d8.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: abda_acceptance <path-to-abda-cli>\n";
    return 2;
  }
  std::string abda = argv[1];

  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion6();
  criteria7and8(abda);
  criterion5();

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : std::to_string(g_failures) + " CRITERIA FAILED")
            << "\n";
  return g_failures == 0 ? 0 : 1;
}

#include "abda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "abda/appearance.hpp"
#include "abda/boundary.hpp"
#include "abda/flowcore.hpp"
#include "abda/retinex.hpp"
#include "abda/rng.hpp"

namespace abda::gradcheck {

namespace ad = abda::ad;

namespace {

Tensor rnd(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// flow with fractional parts away from the bilinear knots at integer offsets
Tensor rnd_flow(int H, int W, Rng& rng) {
  Tensor t({2, H, W});
  for (std::size_t i = 0; i < t.size(); ++i) {
    double mag = rng.uniform(0.15, 0.85);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
    t[i] += (rng.uniform() < 0.5 ? -1.0 : 1.0) * static_cast<double>(rng.uniform_int(2));
  }
  return t;
}

ad::Value l2norm_columns(const ad::Value& m) {
  int C = m->val.dim(0), N = m->val.dim(1);
  auto cube = ad::reshape(m, {C, N, 1});
  return ad::reshape(ad::l2norm_channels(cube), {C, N});
}

}  // namespace

double max_rel_error(const std::vector<ad::Value>& leaves,
                     const std::function<ad::Value()>& fn,
                     const Options& opts) {
  for (const ad::Value& l : leaves) {
    l->requires_grad = true;
    l->ensure_grad();
    l->zero_grad();
  }
  ad::Value root = fn();
  if (root->val.size() != 1)
    throw std::logic_error("max_rel_error: fn must return a scalar");
  ad::backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const ad::Value& l : leaves) analytic.push_back(l->grad);

  Rng rng(opts.seed * 977 + 13);
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& v = leaves[li]->val;
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_per_leaf > 0 &&
        idx.size() > static_cast<std::size_t>(opts.max_per_leaf)) {
      rng.shuffle(idx);
      idx.resize(static_cast<std::size_t>(opts.max_per_leaf));
    }
    for (std::size_t i : idx) {
      double orig = v[i];
      v[i] = orig + opts.h;
      double fp = fn()->val.item();
      v[i] = orig - opts.h;
      double fm = fn()->val.item();
      v[i] = orig;
      double fd = (fp - fm) / (2.0 * opts.h);
      double an = analytic[li].size() == v.size() ? analytic[li][i] : 0.0;
      double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::vector<CheckResult> run_all(const Options& opts) {
  std::vector<CheckResult> results;
  Rng rng(opts.seed * 31 + 7);

  auto record = [&](const std::string& name,
                    const std::vector<ad::Value>& leaves,
                    const std::function<ad::Value()>& fn,
                    int heavy_budget = 0) {
    Options o = opts;
    if (heavy_budget > 0 && (o.max_per_leaf == 0 || o.max_per_leaf > heavy_budget))
      o.max_per_leaf = heavy_budget;
    CheckResult r;
    r.name = name;
    r.max_rel_err = max_rel_error(leaves, fn, o);
    r.pass = r.max_rel_err <= opts.tol;
    results.push_back(r);
  };

  // --- core ops ---
  {
    auto x = ad::leaf(rnd({2, 6, 6}, rng, -1, 1));
    auto w = ad::leaf(rnd({3, 2, 3, 3}, rng, -0.5, 0.5));
    auto b = ad::leaf(rnd({3}, rng, -0.1, 0.1));
    auto mixw = ad::constant(rnd({3, 6, 6}, rng, -1, 1));
    record("op/conv2d", {x, w, b}, [&] {
      return ad::sum(ad::mul(ad::conv2d(x, w, b, 1, 1), mixw));
    });
  }
  {
    auto x = ad::leaf(rnd({1, 8, 8}, rng, 0.1, 0.9));
    auto flow = ad::leaf(rnd_flow(8, 8, rng));
    auto mixw = ad::constant(rnd({1, 8, 8}, rng, -1, 1));
    record("op/bilinear_warp", {x, flow}, [&] {
      return ad::sum(ad::mul(ad::bilinear_warp(x, flow), mixw));
    });
  }
  {
    auto f = ad::leaf(rnd({3, 5, 5}, rng, -1, 1));
    auto g = ad::leaf(rnd({3, 5, 5}, rng, -1, 1));
    auto mixw = ad::constant(rnd({9, 5, 5}, rng, -1, 1));
    record("op/cost_volume", {f, g}, [&] {
      return ad::sum(ad::mul(ad::cost_volume(f, g, 1), mixw));
    });
  }
  {
    auto x = ad::leaf(rnd({4, 3, 3}, rng, -2, 2));
    record("op/softmax_upsample", {x}, [&] {
      auto s = ad::softmax_channels(x);
      auto up = ad::upsample_bilinear(s, 2);
      return ad::mean(ad::square(ad::weighted_channel_sum(
          up, {0.3, -0.7, 1.1, 0.2})));
    });
  }

  // --- loss terms ---
  {
    Tensor frame_t = rnd({1, 8, 8}, rng, 0.05, 0.95);
    Tensor frame_t1 = rnd({1, 8, 8}, rng, 0.05, 0.95);
    Tensor occ({1, 8, 8});
    for (std::size_t i = 0; i < occ.size(); ++i)
      occ[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;
    auto flow = ad::leaf(rnd_flow(8, 8, rng));
    record("loss/photometric", {flow}, [&] {
      return flowcore::photometric_loss(frame_t, frame_t1, flow, occ);
    });
  }
  {
    appearance::Discriminator disc(1, opts.seed + 21);
    std::vector<ad::Value> day = {ad::leaf(rnd({1, 8, 8}, rng, 0.3, 0.9)),
                                  ad::leaf(rnd({1, 8, 8}, rng, 0.3, 0.9))};
    std::vector<ad::Value> night = {ad::leaf(rnd({1, 8, 8}, rng, 0.05, 0.5)),
                                    ad::leaf(rnd({1, 8, 8}, rng, 0.05, 0.5))};
    std::vector<ad::Value> leaves = {day[0], day[1], night[0], night[1]};
    for (const auto& [n, v] : disc.params().items()) leaves.push_back(v);
    record("loss/adversarial_d", leaves, [&] {
      return appearance::adversarial_losses(day, night, disc).discriminator;
    }, 6);
    record("loss/adversarial_g", leaves, [&] {
      return appearance::adversarial_losses(day, night, disc).generator;
    }, 6);
  }
  {
    auto cv_n_r = ad::leaf(rnd({5, 3, 3}, rng, -1, 1));
    auto cv_d_r = ad::constant(rnd({5, 3, 3}, rng, -1, 1));
    record("loss/kl_cost", {cv_n_r}, [&] {
      return appearance::kl_cost_loss(cv_n_r, cv_d_r);
    });
  }
  {
    auto cv_d = ad::leaf(rnd({5, 3, 3}, rng, -1, 1));
    auto cv_d_r = ad::leaf(rnd({5, 3, 3}, rng, -1, 1));
    auto cv_n = ad::leaf(rnd({5, 3, 3}, rng, -1, 1));
    auto cv_n_r = ad::leaf(rnd({5, 3, 3}, rng, -1, 1));
    record("loss/intra_align", {cv_d, cv_d_r, cv_n, cv_n_r}, [&] {
      return appearance::intra_align_loss(cv_d, cv_d_r, cv_n, cv_n_r);
    });
    auto cd = ad::constant(cv_d->val);
    auto cdr = ad::constant(cv_d_r->val);
    record("loss/inter_align", {cv_n, cv_n_r}, [&] {
      return appearance::inter_align_loss(cd, cdr, cv_n, cv_n_r);
    });
  }
  {
    boundary::AttentionNet net(4, opts.seed + 33);
    Tensor corr = rnd({1, 6, 6}, rng, 0, 1);
    Tensor labels = boundary::class_labels(corr, 4);
    auto corr_v = ad::constant(corr);
    std::vector<ad::Value> leaves;
    for (const auto& [n, v] : net.params().items()) leaves.push_back(v);
    record("loss/cls", leaves, [&] {
      return boundary::cls_loss(net.forward(corr_v), labels);
    }, 6);
  }
  {
    auto pe = ad::leaf(rnd({6, 4}, rng, -1, 1));
    auto pn = ad::leaf(rnd({6, 4}, rng, -1, 1));
    auto ng = ad::leaf(rnd({6, 4}, rng, -1, 1));
    record("loss/contrastive", {pe, pn, ng}, [&] {
      boundary::SampleSet set;
      set.positives_event = l2norm_columns(pe);
      set.positives_night = l2norm_columns(pn);
      set.negatives_night = l2norm_columns(ng);
      set.tau = 0.07;
      return boundary::contrastive_loss(set);
    });
  }
  {
    auto flow = ad::leaf(rnd_flow(6, 6, rng));
    Tensor flow_ev = rnd_flow(6, 6, rng);
    Tensor valid({1, 6, 6});
    for (std::size_t i = 0; i < valid.size(); ++i)
      valid[i] = rng.uniform() < 0.6 ? 1.0 : 0.0;
    if (valid.sum() == 0.0) valid[0] = 1.0;
    record("loss/motion_consistency", {flow}, [&] {
      return boundary::motion_consistency_loss(flow, flow_ev, valid);
    });
  }

  // --- end-to-end networks ---
  {
    flowcore::FlowNet net(1, opts.seed + 41);
    Tensor frame_t = rnd({1, 16, 16}, rng, 0.05, 0.95);
    Tensor frame_t1 = rnd({1, 16, 16}, rng, 0.05, 0.95);
    Tensor occ({1, 16, 16});
    auto ft = ad::constant(frame_t);
    auto ft1 = ad::constant(frame_t1);
    std::vector<ad::Value> leaves;
    for (const auto& [n, v] : net.params().items()) leaves.push_back(v);
    record("net/flow_photometric", leaves, [&] {
      return flowcore::photometric_loss(frame_t, frame_t1,
                                        net.forward(ft, ft1), occ);
    }, 3);

    Tensor va = rnd({flowcore::kEventChannels, 16, 16}, rng, 0, 2);
    Tensor vb = rnd({flowcore::kEventChannels, 16, 16}, rng, 0, 2);
    auto va_v = ad::constant(va);
    auto vb_v = ad::constant(vb);
    record("net/event_flow_photometric", leaves, [&] {
      return flowcore::photometric_loss(frame_t, frame_t1,
                                        net.forward_events(va_v, vb_v), occ);
    }, 3);
  }
  {
    retinex::Decomposer dec(1, opts.seed + 55);
    Tensor img = rnd({1, 16, 16}, rng, 0.05, 0.95);
    auto img_v = ad::constant(img);
    std::vector<ad::Value> leaves;
    for (const auto& [n, v] : dec.params().items()) leaves.push_back(v);
    record("net/decomposer", leaves, [&] {
      auto h = dec.forward(img_v);
      return ad::add(ad::mean(ad::square(h.reflectance)),
                     ad::mean(ad::square(h.illumination)));
    }, 4);
  }

  return results;
}

}  // namespace abda::gradcheck

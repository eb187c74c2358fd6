#include "abda/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace abda::ad {

namespace {

Value make_node(Tensor val, std::vector<Value> parents,
                std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

struct Bcast {
  std::vector<int> oshape;
  long astr[4] = {0, 0, 0, 0};
  long bstr[4] = {0, 0, 0, 0};
  int rank = 0;
  std::size_t n = 1;
};

Bcast broadcast_info(const Tensor& a, const Tensor& b, const char* where) {
  if (a.rank() != b.rank())
    throw std::invalid_argument(std::string(where) + ": rank mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  Bcast bc;
  bc.rank = a.rank();
  bc.oshape.resize(static_cast<std::size_t>(bc.rank));
  for (int i = 0; i < bc.rank; ++i) {
    int ad = a.dim(i), bd = b.dim(i);
    if (ad != bd && ad != 1 && bd != 1)
      throw std::invalid_argument(std::string(where) + ": shapes " +
                                  a.shape_str() + " and " + b.shape_str() +
                                  " not broadcastable");
    bc.oshape[static_cast<std::size_t>(i)] = std::max(ad, bd);
    bc.n *= static_cast<std::size_t>(std::max(ad, bd));
  }
  long as = 1, bs = 1;
  for (int i = bc.rank - 1; i >= 0; --i) {
    bc.astr[i] = (a.dim(i) == 1 && bc.oshape[static_cast<std::size_t>(i)] != 1)
                     ? 0
                     : as;
    bc.bstr[i] = (b.dim(i) == 1 && bc.oshape[static_cast<std::size_t>(i)] != 1)
                     ? 0
                     : bs;
    as *= a.dim(i);
    bs *= b.dim(i);
  }
  return bc;
}

template <typename Fn>
void bcast_foreach(const Bcast& bc, Fn&& fn) {
  int idx[4] = {0, 0, 0, 0};
  for (std::size_t o = 0; o < bc.n; ++o) {
    std::size_t ai = 0, bi = 0;
    for (int i = 0; i < bc.rank; ++i) {
      ai += static_cast<std::size_t>(idx[i] * bc.astr[i]);
      bi += static_cast<std::size_t>(idx[i] * bc.bstr[i]);
    }
    fn(o, ai, bi);
    for (int i = bc.rank - 1; i >= 0; --i) {
      if (++idx[i] < bc.oshape[static_cast<std::size_t>(i)]) break;
      idx[i] = 0;
    }
  }
}

// Generic broadcasting binary op. dfda/dfdb evaluate the local partials from
// the operand values.
template <typename F, typename Da, typename Db>
Value binary(const Value& a, const Value& b, const char* where, F f, Da dfda,
             Db dfdb) {
  Bcast bc = broadcast_info(a->val, b->val, where);
  Tensor out(bc.oshape);
  const Tensor& av = a->val;
  const Tensor& bv = b->val;
  bcast_foreach(bc, [&](std::size_t o, std::size_t ai, std::size_t bi) {
    out[o] = f(av[ai], bv[bi]);
  });
  Value va = a, vb = b;
  return make_node(std::move(out), {a, b}, [va, vb, bc, dfda, dfdb](Node& n) {
    bool ga = va->requires_grad, gb = vb->requires_grad;
    if (ga) va->ensure_grad();
    if (gb) vb->ensure_grad();
    const Tensor& av = va->val;
    const Tensor& bv = vb->val;
    bcast_foreach(bc, [&](std::size_t o, std::size_t ai, std::size_t bi) {
      double g = n.grad[o];
      if (ga) va->grad[ai] += g * dfda(av[ai], bv[bi]);
      if (gb) vb->grad[bi] += g * dfdb(av[ai], bv[bi]);
    });
  });
}

template <typename F, typename D>
Value unary(const Value& a, F f, D dfdx) {
  Tensor out(a->val.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->val[i]);
  Value va = a;
  return make_node(std::move(out), {a}, [va, dfdx](Node& n) {
    va->ensure_grad();
    for (std::size_t i = 0; i < n.val.size(); ++i)
      va->grad[i] += n.grad[i] * dfdx(va->val[i], n.val[i]);
  });
}

void check_rank3(const Value& a, const char* where) {
  if (a->val.rank() != 3)
    throw std::invalid_argument(std::string(where) + ": expected rank-3, got " +
                                a->val.shape_str());
}

}  // namespace

Value leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  return n;
}

Value constant(Tensor t) { return leaf(std::move(t), false); }
Value constant(double v) { return leaf(Tensor::scalar(v), false); }

Value detach(const Value& v) { return constant(v->val); }

void backward(const Value& root) {
  if (root->val.size() != 1)
    throw std::logic_error("backward: root must be scalar");
  if (!root->requires_grad) return;
  // iterative post-order topo sort
  std::vector<Node*> order;
  std::vector<Value> owners;  // keep graph alive by handle
  std::unordered_set<Node*> visited;
  struct Frame {
    Value v;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.v->parents.size()) {
      Value p = f.v->parents[f.next_parent++];
      if (p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.v.get());
      owners.push_back(f.v);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() == n->val.size()) n->backprop(*n);
  }
}

// ---- elementwise ----

Value add(const Value& a, const Value& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Value sub(const Value& a, const Value& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Value mul(const Value& a, const Value& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Value div(const Value& a, const Value& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Value neg(const Value& a) { return mul_scalar(a, -1.0); }

Value add_scalar(const Value& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Value mul_scalar(const Value& a, double s) {
  return unary(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

// ---- unary ----

Value exp(const Value& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Value log(const Value& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Value log_floor(const Value& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Value sigmoid(const Value& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Value tanh(const Value& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Value relu(const Value& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value leaky_relu(const Value& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Value softplus(const Value& a) {
  return unary(
      a,
      [](double x) {
        return x > 30.0 ? x : std::log1p(std::exp(x));
      },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Value pow_const(const Value& a, double p) {
  return unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Value pow_abs(const Value& a, double p, double eps) {
  return unary(
      a, [p, eps](double x) { return std::pow(std::fabs(x) + eps, p); },
      [p, eps](double x, double) {
        double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        return s * p * std::pow(std::fabs(x) + eps, p - 1.0);
      });
}

Value square(const Value& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

// ---- reductions ----

Value sum(const Value& a) {
  Tensor out = Tensor::scalar(a->val.sum());
  Value va = a;
  return make_node(std::move(out), {a}, [va](Node& n) {
    va->ensure_grad();
    double g = n.grad[0];
    for (std::size_t i = 0; i < va->grad.size(); ++i) va->grad[i] += g;
  });
}

Value mean(const Value& a) {
  double inv = 1.0 / static_cast<double>(a->val.size());
  return mul_scalar(sum(a), inv);
}

// ---- channel ops ----

Value softmax_channels(const Value& a) {
  check_rank3(a, "softmax_channels");
  int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
  Tensor out(a->val.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double m = -1e300;
      for (int c = 0; c < C; ++c) m = std::max(m, a->val.at(c, y, x));
      double z = 0.0;
      for (int c = 0; c < C; ++c) {
        double e = std::exp(a->val.at(c, y, x) - m);
        out.at(c, y, x) = e;
        z += e;
      }
      for (int c = 0; c < C; ++c) out.at(c, y, x) /= z;
    }
  Value va = a;
  return make_node(std::move(out), {a}, [va, C, H, W](Node& n) {
    va->ensure_grad();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c)
          dot += n.grad.at(c, y, x) * n.val.at(c, y, x);
        for (int c = 0; c < C; ++c)
          va->grad.at(c, y, x) +=
              n.val.at(c, y, x) * (n.grad.at(c, y, x) - dot);
      }
  });
}

Value weighted_channel_sum(const Value& a, const std::vector<double>& w) {
  check_rank3(a, "weighted_channel_sum");
  int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
  if (static_cast<int>(w.size()) != C)
    throw std::invalid_argument("weighted_channel_sum: weight count");
  Tensor out({1, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(0, y, x) += w[static_cast<std::size_t>(c)] * a->val.at(c, y, x);
  Value va = a;
  return make_node(std::move(out), {a}, [va, w, C, H, W](Node& n) {
    va->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          va->grad.at(c, y, x) += w[static_cast<std::size_t>(c)] * n.grad.at(0, y, x);
  });
}

Value l2norm_channels(const Value& a, double eps) {
  check_rank3(a, "l2norm_channels");
  int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
  Tensor out(a->val.shape());
  Tensor norms({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = eps;
      for (int c = 0; c < C; ++c) {
        double v = a->val.at(c, y, x);
        s += v * v;
      }
      double nrm = std::sqrt(s);
      norms.at(y, x) = nrm;
      for (int c = 0; c < C; ++c) out.at(c, y, x) = a->val.at(c, y, x) / nrm;
    }
  Value va = a;
  return make_node(std::move(out), {a}, [va, norms, C, H, W](Node& n) {
    va->ensure_grad();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double nrm = norms.at(y, x);
        double dot = 0.0;
        for (int c = 0; c < C; ++c)
          dot += n.grad.at(c, y, x) * va->val.at(c, y, x);
        for (int c = 0; c < C; ++c)
          va->grad.at(c, y, x) +=
              n.grad.at(c, y, x) / nrm -
              va->val.at(c, y, x) * dot / (nrm * nrm * nrm);
      }
  });
}

Value concat_channels(const Value& a, const Value& b) {
  check_rank3(a, "concat_channels");
  check_rank3(b, "concat_channels");
  int Ca = a->val.dim(0), Cb = b->val.dim(0);
  int H = a->val.dim(1), W = a->val.dim(2);
  if (b->val.dim(1) != H || b->val.dim(2) != W)
    throw std::invalid_argument("concat_channels: spatial mismatch");
  Tensor out({Ca + Cb, H, W});
  std::memcpy(out.data(), a->val.data(), a->val.size() * sizeof(double));
  std::memcpy(out.data() + a->val.size(), b->val.data(),
              b->val.size() * sizeof(double));
  Value va = a, vb = b;
  return make_node(std::move(out), {a, b}, [va, vb](Node& n) {
    std::size_t na = va->val.size();
    if (va->requires_grad) {
      va->ensure_grad();
      for (std::size_t i = 0; i < na; ++i) va->grad[i] += n.grad[i];
    }
    if (vb->requires_grad) {
      vb->ensure_grad();
      for (std::size_t i = 0; i < vb->val.size(); ++i)
        vb->grad[i] += n.grad[na + i];
    }
  });
}

Value reshape(const Value& a, std::vector<int> shape) {
  Tensor out(shape);
  if (out.size() != a->val.size())
    throw std::invalid_argument("reshape: element count mismatch");
  std::memcpy(out.data(), a->val.data(), a->val.size() * sizeof(double));
  Value va = a;
  return make_node(std::move(out), {a}, [va](Node& n) {
    va->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) va->grad[i] += n.grad[i];
  });
}

Value upsample_bilinear(const Value& a, int factor) {
  check_rank3(a, "upsample_bilinear");
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor");
  int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
  int Ho = H * factor, Wo = W * factor;
  Tensor out({C, Ho, Wo});
  auto src = [&](int o, int n_in) {
    double s = (o + 0.5) / factor - 0.5;
    return std::min(std::max(s, 0.0), static_cast<double>(n_in - 1));
  };
  for (int y = 0; y < Ho; ++y) {
    double sy = src(y, H);
    int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, H - 1);
    double wy = sy - y0;
    for (int x = 0; x < Wo; ++x) {
      double sx = src(x, W);
      int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, W - 1);
      double wx = sx - x0;
      for (int c = 0; c < C; ++c) {
        out.at(c, y, x) =
            (1 - wy) * ((1 - wx) * a->val.at(c, y0, x0) +
                        wx * a->val.at(c, y0, x1)) +
            wy * ((1 - wx) * a->val.at(c, y1, x0) + wx * a->val.at(c, y1, x1));
      }
    }
  }
  Value va = a;
  return make_node(std::move(out), {a}, [va, factor, C, H, W, Ho, Wo](Node& n) {
    va->ensure_grad();
    auto src = [&](int o, int n_in) {
      double s = (o + 0.5) / factor - 0.5;
      return std::min(std::max(s, 0.0), static_cast<double>(n_in - 1));
    };
    for (int y = 0; y < Ho; ++y) {
      double sy = src(y, H);
      int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, H - 1);
      double wy = sy - y0;
      for (int x = 0; x < Wo; ++x) {
        double sx = src(x, W);
        int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, W - 1);
        double wx = sx - x0;
        for (int c = 0; c < C; ++c) {
          double g = n.grad.at(c, y, x);
          va->grad.at(c, y0, x0) += g * (1 - wy) * (1 - wx);
          va->grad.at(c, y0, x1) += g * (1 - wy) * wx;
          va->grad.at(c, y1, x0) += g * wy * (1 - wx);
          va->grad.at(c, y1, x1) += g * wy * wx;
        }
      }
    }
  });
}

// ---- structured ops ----

Value conv2d(const Value& x, const Value& w, const Value& b, int stride,
             int pad) {
  if (x->val.rank() != 3 || w->val.rank() != 4 || b->val.rank() != 1)
    throw std::invalid_argument("conv2d: bad ranks");
  int Cin = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  int Cout = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  if (w->val.dim(1) != Cin || b->val.dim(0) != Cout)
    throw std::invalid_argument("conv2d: channel mismatch");
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor out({Cout, Ho, Wo});
  const double* xd = x->val.data();
  const double* wd = w->val.data();
  for (int co = 0; co < Cout; ++co) {
    double bias = b->val[static_cast<std::size_t>(co)];
    for (int yo = 0; yo < Ho; ++yo)
      for (int xo = 0; xo < Wo; ++xo) {
        double acc = bias;
        for (int ci = 0; ci < Cin; ++ci)
          for (int ky = 0; ky < kh; ++ky) {
            int yi = yo * stride - pad + ky;
            if (yi < 0 || yi >= H) continue;
            const double* xrow =
                xd + (static_cast<std::size_t>(ci) * H + yi) * W;
            const double* wrow =
                wd + ((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              int xi = xo * stride - pad + kx;
              if (xi < 0 || xi >= W) continue;
              acc += xrow[xi] * wrow[kx];
            }
          }
        out.at(co, yo, xo) = acc;
      }
  }
  Value vx = x, vw = w, vb = b;
  return make_node(
      std::move(out), {x, w, b},
      [vx, vw, vb, stride, pad, Cin, H, W, Cout, kh, kw, Ho, Wo](Node& n) {
        bool gx = vx->requires_grad, gw = vw->requires_grad,
             gb = vb->requires_grad;
        if (gx) vx->ensure_grad();
        if (gw) vw->ensure_grad();
        if (gb) vb->ensure_grad();
        for (int co = 0; co < Cout; ++co)
          for (int yo = 0; yo < Ho; ++yo)
            for (int xo = 0; xo < Wo; ++xo) {
              double g = n.grad.at(co, yo, xo);
              if (g == 0.0) continue;
              if (gb) vb->grad[static_cast<std::size_t>(co)] += g;
              for (int ci = 0; ci < Cin; ++ci)
                for (int ky = 0; ky < kh; ++ky) {
                  int yi = yo * stride - pad + ky;
                  if (yi < 0 || yi >= H) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int xi = xo * stride - pad + kx;
                    if (xi < 0 || xi >= W) continue;
                    std::size_t widx =
                        ((static_cast<std::size_t>(co) * Cin + ci) * kh + ky) *
                            kw +
                        kx;
                    if (gx) vx->grad.at(ci, yi, xi) += g * vw->val[widx];
                    if (gw) vw->grad[widx] += g * vx->val.at(ci, yi, xi);
                  }
                }
            }
      });
}

namespace {
struct Stencil {
  int x0, x1, y0, y1;
  double wx, wy;
  double dsx_du, dsy_dv;  // clamp derivative flags
};

Stencil warp_stencil(int x, int y, double u, double v, int W, int H) {
  Stencil s;
  double sx = x + u, sy = y + v;
  s.dsx_du = (sx > 0.0 && sx < W - 1) ? 1.0 : 0.0;
  s.dsy_dv = (sy > 0.0 && sy < H - 1) ? 1.0 : 0.0;
  sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
  s.x0 = static_cast<int>(sx);
  s.y0 = static_cast<int>(sy);
  s.x1 = std::min(s.x0 + 1, W - 1);
  s.y1 = std::min(s.y0 + 1, H - 1);
  s.wx = sx - s.x0;
  s.wy = sy - s.y0;
  return s;
}
}  // namespace

Value bilinear_warp(const Value& x, const Value& flow) {
  check_rank3(x, "bilinear_warp");
  check_rank3(flow, "bilinear_warp");
  int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  if (flow->val.dim(0) != 2 || flow->val.dim(1) != H || flow->val.dim(2) != W)
    throw std::invalid_argument("bilinear_warp: flow shape mismatch");
  Tensor out({C, H, W});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      Stencil s = warp_stencil(xx, y, flow->val.at(0, y, xx),
                               flow->val.at(1, y, xx), W, H);
      for (int c = 0; c < C; ++c) {
        out.at(c, y, xx) =
            (1 - s.wy) * ((1 - s.wx) * x->val.at(c, s.y0, s.x0) +
                          s.wx * x->val.at(c, s.y0, s.x1)) +
            s.wy * ((1 - s.wx) * x->val.at(c, s.y1, s.x0) +
                    s.wx * x->val.at(c, s.y1, s.x1));
      }
    }
  Value vx = x, vf = flow;
  return make_node(std::move(out), {x, flow}, [vx, vf, C, H, W](Node& n) {
    bool gx = vx->requires_grad, gf = vf->requires_grad;
    if (gx) vx->ensure_grad();
    if (gf) vf->ensure_grad();
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        Stencil s = warp_stencil(xx, y, vf->val.at(0, y, xx),
                                 vf->val.at(1, y, xx), W, H);
        for (int c = 0; c < C; ++c) {
          double g = n.grad.at(c, y, xx);
          if (g == 0.0) continue;
          double v00 = vx->val.at(c, s.y0, s.x0);
          double v01 = vx->val.at(c, s.y0, s.x1);
          double v10 = vx->val.at(c, s.y1, s.x0);
          double v11 = vx->val.at(c, s.y1, s.x1);
          if (gx) {
            vx->grad.at(c, s.y0, s.x0) += g * (1 - s.wy) * (1 - s.wx);
            vx->grad.at(c, s.y0, s.x1) += g * (1 - s.wy) * s.wx;
            vx->grad.at(c, s.y1, s.x0) += g * s.wy * (1 - s.wx);
            vx->grad.at(c, s.y1, s.x1) += g * s.wy * s.wx;
          }
          if (gf) {
            double dval_dsx = (1 - s.wy) * (v01 - v00) + s.wy * (v11 - v10);
            double dval_dsy = (1 - s.wx) * (v10 - v00) + s.wx * (v11 - v01);
            vf->grad.at(0, y, xx) += g * dval_dsx * s.dsx_du;
            vf->grad.at(1, y, xx) += g * dval_dsy * s.dsy_dv;
          }
        }
      }
  });
}

Tensor warp_validity(const Tensor& flow) {
  int H = flow.dim(1), W = flow.dim(2);
  Tensor v({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double sx = x + flow.at(0, y, x);
      double sy = y + flow.at(1, y, x);
      v.at(0, y, x) =
          (sx >= 0.0 && sx <= W - 1 && sy >= 0.0 && sy <= H - 1) ? 1.0 : 0.0;
    }
  return v;
}

Value cost_volume(const Value& f, const Value& g, int radius) {
  check_rank3(f, "cost_volume");
  check_rank3(g, "cost_volume");
  check_same_shape(f->val, g->val, "cost_volume");
  if (radius < 1) throw std::invalid_argument("cost_volume: radius >= 1");
  int C = f->val.dim(0), H = f->val.dim(1), W = f->val.dim(2);
  int side = 2 * radius + 1;
  int D = side * side;
  Tensor out({D, H, W});
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      int ch = (dy + radius) * side + (dx + radius);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          int y2 = y + dy, x2 = x + dx;
          if (y2 < 0 || y2 >= H || x2 < 0 || x2 >= W) {
            out.at(ch, y, x) = -1.0;
            continue;
          }
          double acc = 0.0;
          for (int c = 0; c < C; ++c)
            acc += f->val.at(c, y, x) * g->val.at(c, y2, x2);
          out.at(ch, y, x) = acc;
        }
    }
  Value vf = f, vg = g;
  return make_node(
      std::move(out), {f, g}, [vf, vg, radius, C, H, W, side](Node& n) {
        bool gf = vf->requires_grad, gg = vg->requires_grad;
        if (gf) vf->ensure_grad();
        if (gg) vg->ensure_grad();
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            int ch = (dy + radius) * side + (dx + radius);
            for (int y = 0; y < H; ++y)
              for (int x = 0; x < W; ++x) {
                int y2 = y + dy, x2 = x + dx;
                if (y2 < 0 || y2 >= H || x2 < 0 || x2 >= W) continue;
                double grad = n.grad.at(ch, y, x);
                if (grad == 0.0) continue;
                for (int c = 0; c < C; ++c) {
                  if (gf) vf->grad.at(c, y, x) += grad * vg->val.at(c, y2, x2);
                  if (gg) vg->grad.at(c, y2, x2) += grad * vf->val.at(c, y, x);
                }
              }
          }
      });
}

Value gather_pixels(const Value& x, const std::vector<std::pair<int, int>>& yx) {
  check_rank3(x, "gather_pixels");
  int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  int N = static_cast<int>(yx.size());
  if (N == 0) throw std::invalid_argument("gather_pixels: empty index list");
  for (auto [y, xx] : yx)
    if (y < 0 || y >= H || xx < 0 || xx >= W)
      throw std::invalid_argument("gather_pixels: index out of range");
  Tensor out({C, N});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < N; ++i)
      out.at(c, i) = x->val.at(c, yx[static_cast<std::size_t>(i)].first,
                               yx[static_cast<std::size_t>(i)].second);
  Value vx = x;
  return make_node(std::move(out), {x}, [vx, yx, C, N](Node& n) {
    vx->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < N; ++i)
        vx->grad.at(c, yx[static_cast<std::size_t>(i)].first,
                    yx[static_cast<std::size_t>(i)].second) += n.grad.at(c, i);
  });
}

Value pairwise_dot(const Value& a, const Value& b) {
  if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(0) != b->val.dim(0))
    throw std::invalid_argument("pairwise_dot: expect (C,N),(C,M)");
  int C = a->val.dim(0), N = a->val.dim(1), M = b->val.dim(1);
  Tensor out({N, M});
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < M; ++j) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c) acc += a->val.at(c, i) * b->val.at(c, j);
      out.at(i, j) = acc;
    }
  Value va = a, vb = b;
  return make_node(std::move(out), {a, b}, [va, vb, C, N, M](Node& n) {
    bool ga = va->requires_grad, gb = vb->requires_grad;
    if (ga) va->ensure_grad();
    if (gb) vb->ensure_grad();
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j) {
        double g = n.grad.at(i, j);
        if (g == 0.0) continue;
        for (int c = 0; c < C; ++c) {
          if (ga) va->grad.at(c, i) += g * vb->val.at(c, j);
          if (gb) vb->grad.at(c, j) += g * va->val.at(c, i);
        }
      }
  });
}

}  // namespace abda::ad

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abda/autograd.hpp"

namespace abda::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct Options {
  double h = 1e-6;          // central-difference step
  double tol = 1e-4;        // relative-error threshold
  int max_per_leaf = 0;     // 0 = every element; otherwise a seeded subsample
  std::uint64_t seed = 0;   // subsample / input seed
};

// Central-difference check of d(fn)/d(leaf) against reverse-mode gradients.
// fn must rebuild its graph from the leaves' current values on every call.
double max_rel_error(const std::vector<ad::Value>& leaves,
                     const std::function<ad::Value()>& fn,
                     const Options& opts = {});

// Every differentiable loss term and core op on small random instances.
std::vector<CheckResult> run_all(const Options& opts = {});

}  // namespace abda::gradcheck

#pragma once

// Central finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mvdam/autodiff.hpp"
#include "mvdam/error.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/rng.hpp"

namespace mvdam {

struct FdOptions {
  double h = 1e-5;
  // Check at most this many randomly chosen entries per tensor (0 = all).
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Scalar objective evaluated at the current parameter values.
using ValueFn = std::function<double(const ParamStore&)>;
// Builds the objective on a graph; used for the analytic gradient and values.
using GraphFn = std::function<Var(Graph&, const ParamStore&)>;

// Compares supplied analytic gradients against central differences of `fn`.
// Relative error per entry: |a - n| / max(|a|, |n|, 1e-12).
inline FdReport fd_compare(const TensorMap& analytic, const ValueFn& fn, ParamStore& params,
                           const FdOptions& opt = {}) {
  if (!(opt.h > 0.0)) throw ValidationError("fd_check: step must be positive");
  FdReport rep;
  Rng rng(opt.seed);
  for (auto& [name, slot] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw ValidationError("fd_check: no analytic gradient for " + name);
    Tensor& x = slot.value;
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.max_per_tensor && idx.size() > opt.max_per_tensor) {
      rng.shuffle(idx);
      idx.resize(opt.max_per_tensor);
    }
    for (std::size_t i : idx) {
      const double orig = x[i];
      x[i] = orig + opt.h;
      const double fp = fn(params);
      x[i] = orig - opt.h;
      const double fm = fn(params);
      x[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw Error("fd_check: objective is not finite near " + name);
      const double num = (fp - fm) / (2.0 * opt.h);
      const double a = it->second[i];
      const double denom = std::max({std::abs(a), std::abs(num), 1e-12});
      const double rel = std::abs(a - num) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.worst_analytic = a;
        rep.worst_numeric = num;
      }
    }
  }
  return rep;
}

// Analytic gradient by reverse mode, checked against central differences.
inline FdReport fd_check(const GraphFn& fn, ParamStore& params, const FdOptions& opt = {}) {
  TensorMap analytic;
  {
    Graph g;
    Var out = fn(g, params);
    if (!std::isfinite(out.item())) throw Error("fd_check: objective is not finite");
    analytic = grad(g, out, params);
  }
  ValueFn value = [&fn](const ParamStore& p) {
    Graph g(false);
    return fn(g, p).item();
  };
  return fd_compare(analytic, value, params, opt);
}

}  // namespace mvdam

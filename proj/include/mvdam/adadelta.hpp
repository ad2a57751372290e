#pragma once

#include <cmath>

#include "mvdam/error.hpp"
#include "mvdam/param_store.hpp"

namespace mvdam {

struct AdaDeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-6;
  double lr = 1.0;
};

// One AdaDelta update (Zeiler 2012) applied in place:
//   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//   x       <- x + lr dx
// Parameters without an entry in `grads` are left untouched.
inline void adadelta_step(ParamStore& params, const TensorMap& grads,
                          const AdaDeltaOptions& opt = {}) {
  if (!(opt.rho > 0.0 && opt.rho < 1.0)) throw ValidationError("adadelta: rho must lie in (0,1)");
  if (!(opt.epsilon > 0.0)) throw ValidationError("adadelta: epsilon must be positive");
  for (const auto& [name, g] : grads) {
    ParamStore::Slot& s = params.slot(name);
    s.value.check_same(g, ("adadelta gradient for " + name).c_str());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      double& eg = s.sq_grad[i];
      double& ex = s.sq_delta[i];
      eg = opt.rho * eg + (1.0 - opt.rho) * gi * gi;
      const double dx = -std::sqrt(ex + opt.epsilon) / std::sqrt(eg + opt.epsilon) * gi;
      ex = opt.rho * ex + (1.0 - opt.rho) * dx * dx;
      s.value[i] += opt.lr * dx;
    }
  }
}

}  // namespace mvdam

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"
#include "mvdam/tensor.hpp"

namespace mvdam {

using TensorMap = std::map<std::string, Tensor>;

// Trainable parameters keyed by namespaced name ("title.fc.W", ...) plus the
// AdaDelta running averages. Ordered so iteration and serialization are
// deterministic.
class ParamStore {
 public:
  struct Slot {
    Tensor value;
    Tensor sq_grad;   // E[g^2]
    Tensor sq_delta;  // E[dx^2]
  };

  Tensor& add(const std::string& name, Tensor value) {
    if (slots_.count(name)) throw ValidationError("ParamStore: duplicate parameter " + name);
    Slot s{value, Tensor::zeros_like(value), Tensor::zeros_like(value)};
    return slots_.emplace(name, std::move(s)).first->second.value;
  }

  // Glorot-uniform init for a [fan_in x fan_out] weight (rank 1: fan_in = n, fan_out = 1).
  Tensor& add_glorot(const std::string& name, Shape shape, Rng& rng) {
    double fan_in = static_cast<double>(shape[0]);
    double fan_out = shape.rank() > 1 ? static_cast<double>(shape[1]) : 1.0;
    return add(name, Tensor::uniform(shape, std::sqrt(6.0 / (fan_in + fan_out)), rng));
  }
  Tensor& add_zeros(const std::string& name, Shape shape) { return add(name, Tensor(shape)); }

  bool contains(const std::string& name) const { return slots_.count(name) != 0; }

  Tensor& value(const std::string& name) { return slot(name).value; }
  const Tensor& value(const std::string& name) const { return slot(name).value; }

  Slot& slot(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ValidationError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Slot& slot(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ValidationError("ParamStore: unknown parameter " + name);
    return it->second;
  }

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }
  std::size_t size() const { return slots_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, s] : slots_) n += s.value.size();
    return n;
  }

  TensorMap values() const {
    TensorMap out;
    for (const auto& [k, s] : slots_) out.emplace(k, s.value);
    return out;
  }

  // Replace values from a map (e.g. a loaded checkpoint); accumulators reset.
  void load_values(const TensorMap& m) {
    for (auto& [k, s] : slots_) {
      auto it = m.find(k);
      if (it == m.end()) throw Error("checkpoint is missing parameter " + k);
      s.value.check_same(it->second, ("load " + k).c_str());
      s.value = it->second;
      s.sq_grad.fill(0.0);
      s.sq_delta.fill(0.0);
    }
  }

  void reset_accumulators() {
    for (auto& [_, s] : slots_) {
      s.sq_grad.fill(0.0);
      s.sq_delta.fill(0.0);
    }
  }

 private:
  std::map<std::string, Slot> slots_;
};

}  // namespace mvdam

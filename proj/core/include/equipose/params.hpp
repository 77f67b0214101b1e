#pragma once

#include <map>
#include <string>
#include <vector>

#include "equipose/rng.hpp"
#include "equipose/tape.hpp"
#include "equipose/tensor.hpp"

namespace equipose::ad {

/// Named parameter tensors plus gradient buffers and a frozen flag. Iteration
/// order is the lexicographic name order, which keeps every sweep (Adam,
/// serialization, finite differences) deterministic.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  bool has(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  void set_frozen(const std::string& name, bool frozen);
  bool frozen(const std::string& name) const;
  /// Marks every parameter whose name starts with prefix.
  void freeze_prefix(const std::string& prefix);

  void zero_grads();
  std::vector<std::string> names() const;
  std::vector<std::string> frozen_names() const;
  std::size_t total_size() const;

  /// Binds the parameter into a tape. Frozen parameters enter as constants,
  /// so they receive exactly zero gradient.
  Var use(Tape& tape, const std::string& name);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool frozen = false;
  };
  std::map<std::string, Entry> entries_;
};

/// Kaiming-style uniform init for a fan_in-fed tensor.
Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                    CounterRng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 1.0;   // multiplicative lr decay
  long decay_every = 0;        // steps between decays; 0 disables
};

/// Adam over the non-frozen entries of a ParamStore.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one update from the accumulated gradients; `step` is 0-based.
  void step(ParamStore& params, long step_index);
  double lr_at(long step_index) const;

 private:
  struct State {
    Tensor m;
    Tensor v;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
};

}  // namespace equipose::ad

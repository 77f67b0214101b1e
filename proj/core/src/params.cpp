#include "equipose/params.hpp"

#include <cmath>

#include "equipose/common.hpp"

namespace equipose::ad {

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  EQP_REQUIRE(!has(name), "param already exists: " + name);
  Entry e;
  e.grad = Tensor(init.shape());
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

bool ParamStore::has(const std::string& name) const {
  return entries_.count(name) > 0;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  return it->second.grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  return it->second.grad;
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  it->second.frozen = frozen;
}

bool ParamStore::frozen(const std::string& name) const {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  return it->second.frozen;
}

void ParamStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, e] : entries_) {
    if (name.rfind(prefix, 0) == 0) e.frozen = true;
  }
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.set_zero();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::frozen_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (e.frozen) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

Var ParamStore::use(Tape& tape, const std::string& name) {
  auto it = entries_.find(name);
  EQP_REQUIRE(it != entries_.end(), "unknown param: " + name);
  if (it->second.frozen) return tape.constant(it->second.value);
  return tape.leaf(it->second.value, &it->second.grad);
}

Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                    CounterRng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void Adam::step(ParamStore& params, long step_index) {
  const double lr = lr_at(step_index);
  const double t = static_cast<double>(step_index + 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (const auto& name : params.names()) {
    if (params.frozen(name)) continue;
    Tensor& v = params.value(name);
    const Tensor& g = params.grad(name);
    auto it = state_.find(name);
    if (it == state_.end()) {
      State s;
      s.m = Tensor(v.shape());
      s.v = Tensor(v.shape());
      it = state_.emplace(name, std::move(s)).first;
    }
    State& s = it->second;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      v[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double Adam::lr_at(long step_index) const {
  if (cfg_.decay_every <= 0 || cfg_.decay_factor >= 1.0) return cfg_.lr;
  const long k = step_index / cfg_.decay_every;
  return cfg_.lr * std::pow(cfg_.decay_factor, static_cast<double>(k));
}

}  // namespace equipose::ad

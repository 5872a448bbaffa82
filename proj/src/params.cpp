#include "gazekit/params.hpp"

#include <cmath>

namespace gazekit {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ValueError("ParamSet: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ValueError("ParamSet: unknown parameter '" + name + "'");
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ValueError("ParamSet: unknown parameter '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

std::int64_t ParamSet::total_values() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

double ParamSet::grad_norm(const std::string& name) const {
  const Tensor& t = get(name);
  double acc = 0.0;
  for (double g : t.grad()) acc += g * g;
  return std::sqrt(acc);
}

Tensor kaiming_conv(Shape shape, Rng& rng) {
  if (shape.size() != 4) throw ShapeError("kaiming_conv: expects OxCxKxK kernel shape");
  const double fan_in = double(shape[1]) * shape[2] * shape[3];
  const double bound = std::sqrt(6.0 / fan_in);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor xavier_linear(int out_dim, int in_dim, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(in_dim + out_dim));
  Tensor t = Tensor::zeros({out_dim, in_dim});
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace gazekit

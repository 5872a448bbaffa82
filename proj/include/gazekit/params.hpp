#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gazekit/rng.hpp"
#include "gazekit/tensor.hpp"

namespace gazekit {

// Named, ordered registry of learnable tensors. Registration order defines
// the checkpoint payload order.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::int64_t total_values() const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grads();
  // Euclidean norm of a parameter's gradient buffer.
  double grad_norm(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Kaiming-uniform fan-in for conv kernels (bound sqrt(6 / fan_in)).
Tensor kaiming_conv(Shape shape, Rng& rng);
// Xavier-uniform for dense maps (bound sqrt(6 / (fan_in + fan_out))).
Tensor xavier_linear(int out_dim, int in_dim, Rng& rng);

}  // namespace gazekit

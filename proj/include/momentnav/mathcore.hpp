#pragma once

// Dense float64 kernel: vectors, small matrices, and the hand-derived
// forward/backward passes for the few layers the policy needs.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "momentnav/rng.hpp"

namespace momentnav {

using Vec = std::vector<double>;

/// Row-major dense array. Rank 1 (vector) or rank 2 (matrix) in practice.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// A learnable array with its gradient accumulator.
struct Param {
  Param() = default;
  Param(std::string name, Tensor value);

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

using ParamRefs = std::vector<Param*>;

// ---------------------------------------------------------------------------
// Layers

/// y = W x + b with W of shape (out, in).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  /// Glorot-uniform weights, zero bias.
  void init(Rng& rng);

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }

  Vec forward(std::span<const double> x) const;
  /// Accumulates dW += g x^T, db += g. Returns W^T g.
  Vec backward(std::span<const double> x, std::span<const double> upstream);

  void collect(ParamRefs& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;
  Param bias;
};

struct FcCache {
  std::vector<Vec> inputs;  // input to each Linear layer
  std::vector<Vec> pre;     // pre-activation output of each Linear layer
  bool ready = false;
};

/// Linear, ReLU, Linear, ..., Linear. widths = {in, hidden..., out}.
class FcNet {
 public:
  FcNet() = default;
  FcNet(const std::string& name, std::vector<std::size_t> widths);

  void init(Rng& rng);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  Vec forward(std::span<const double> x, FcCache* cache = nullptr) const;
  /// Requires a cache filled by forward(); throws StateError otherwise.
  Vec backward(const FcCache& cache, std::span<const double> upstream);

  void collect(ParamRefs& out);
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

struct GruCache {
  Vec x, h, z, r, candidate, reset_h;
  bool ready = false;
};

struct GruGrads {
  Vec dx;
  Vec dh;
};

/// h' = (1 - z) * h + z * tanh(W_h x + U_h (r * h) + b_h)
/// with z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r).
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& name, std::size_t input_dim, std::size_t hidden_dim);

  void init(Rng& rng);

  std::size_t input_dim() const { return W_z.value.cols(); }
  std::size_t hidden_dim() const { return W_z.value.rows(); }

  Vec forward(std::span<const double> x, std::span<const double> h, GruCache* cache = nullptr) const;
  GruGrads backward(const GruCache& cache, std::span<const double> upstream);

  void collect(ParamRefs& out);

  Param W_z, U_z, b_z;
  Param W_r, U_r, b_r;
  Param W_h, U_h, b_h;
};

// ---------------------------------------------------------------------------
// Free functions

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Cosine similarity. Zero-norm inputs yield 0 (and zero gradient below).
double cosine(std::span<const double> a, std::span<const double> b);

/// Gradient of upstream * cosine(a, b) with respect to a and b.
std::pair<Vec, Vec> cosine_backward(std::span<const double> a, std::span<const double> b,
                                    double upstream);

/// Max-subtracted softmax. Throws ArgumentError on empty input.
Vec softmax(std::span<const double> scores);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void zero_grads(std::span<Param* const> params);

/// Global-norm clip at `clip`, then value -= lr * grad, then zero grads.
/// Non-finite gradients raise TrainingError naming the parameter.
/// Returns the pre-clip global gradient norm.
double sgd_step(std::span<Param* const> params, double lr,
                double clip = std::numeric_limits<double>::infinity());

struct GradcheckOptions {
  double step = 1e-6;
  /// Check at most this many entries per parameter (0 = all), sampled with `seed`.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  /// Same maximum with the plain 1e-8 floor, for comparison.
  double max_rel_error_fixed_floor = 0.0;
};

/// Relative error used by gradcheck: |a - n| / max(floor, |a| + |n|).
/// gradcheck passes floor = 1e-5 * max(1, |loss|): smaller entries are
/// below what a central difference resolves at h = 1e-6.
double gradcheck_rel_error(double analytic, double numeric, double floor = 1e-5);

/// `loss(true)` must return the loss and accumulate analytic gradients into the
/// params; `loss(false)` must return the loss without touching gradients.
/// Gradients are zeroed before the analytic pass.
GradcheckReport gradcheck(const std::function<double(bool)>& loss,
                          std::span<Param* const> params,
                          const GradcheckOptions& options = {});

}  // namespace momentnav

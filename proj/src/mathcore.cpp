#include "momentnav/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "momentnav/errors.hpp"

namespace momentnav {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw ConfigError(what + ": dimension mismatch (got " + std::to_string(got) + ", expected " +
                      std::to_string(want) + ")");
  }
}

Param matrix_param(const std::string& name, std::size_t rows, std::size_t cols) {
  return Param(name, Tensor({rows, cols}));
}

Param vector_param(const std::string& name, std::size_t n) { return Param(name, Tensor({n})); }

void glorot(Param& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (double& w : p.value.data()) w = rng.uniform(-limit, limit);
}

// out = M x (+ out if accumulate)
void matvec(const Tensor& m, std::span<const double> x, std::span<double> out) {
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

// out += M^T g
void matvec_t(const Tensor& m, std::span<const double> g, std::span<double> out) {
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = m.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * gr;
  }
}

// G += g x^T
void outer_acc(Tensor& grad, std::span<const double> g, std::span<const double> x) {
  const std::size_t rows = grad.rows(), cols = grad.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = grad.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor / Param

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ArgumentError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape product " + std::to_string(product(shape_)));
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Param::Param(std::string name_in, Tensor value_in)
    : name(std::move(name_in)), value(std::move(value_in)), grad(value.shape()) {}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(matrix_param(name + ".weight", out, in)), bias(vector_param(name + ".bias", out)) {}

void Linear::init(Rng& rng) {
  glorot(weight, rng);
  bias.value.fill(0.0);
}

Vec Linear::forward(std::span<const double> x) const {
  require_dim(x.size(), in_dim(), weight.name);
  Vec y(bias.value.data().begin(), bias.value.data().end());
  matvec(weight.value, x, y);
  return y;
}

Vec Linear::backward(std::span<const double> x, std::span<const double> upstream) {
  require_dim(x.size(), in_dim(), weight.name);
  require_dim(upstream.size(), out_dim(), weight.name);
  outer_acc(weight.grad, upstream, x);
  axpy(1.0, upstream, bias.grad.data());
  Vec dx(in_dim(), 0.0);
  matvec_t(weight.value, upstream, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// FcNet

FcNet::FcNet(const std::string& name, std::vector<std::size_t> widths) {
  if (widths.size() < 2) throw ConfigError(name + ": needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) throw ConfigError(name + ": zero width");
    layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1]);
  }
}

void FcNet::init(Rng& rng) {
  for (Linear& layer : layers_) layer.init(rng);
}

Vec FcNet::forward(std::span<const double> x, FcCache* cache) const {
  require_dim(x.size(), in_dim(), layers_.front().weight.name);
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->ready = false;
  }
  Vec current(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Vec pre = layers_[i].forward(current);
    if (cache) {
      cache->inputs.push_back(std::move(current));
      cache->pre.push_back(pre);
    }
    if (i + 1 < layers_.size()) {
      for (double& v : pre) v = v > 0.0 ? v : 0.0;
    }
    current = std::move(pre);
  }
  if (cache) cache->ready = true;
  return current;
}

Vec FcNet::backward(const FcCache& cache, std::span<const double> upstream) {
  if (!cache.ready || cache.inputs.size() != layers_.size()) {
    throw StateError(layers_.front().weight.name + ": backward called before forward");
  }
  Vec grad(upstream.begin(), upstream.end());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) {
      const Vec& pre = cache.pre[i];
      for (std::size_t j = 0; j < grad.size(); ++j) {
        if (pre[j] <= 0.0) grad[j] = 0.0;
      }
    }
    grad = layers_[i].backward(cache.inputs[i], grad);
  }
  return grad;
}

void FcNet::collect(ParamRefs& out) {
  for (Linear& layer : layers_) layer.collect(out);
}

// ---------------------------------------------------------------------------
// GruCell

GruCell::GruCell(const std::string& name, std::size_t input_dim, std::size_t hidden_dim)
    : W_z(matrix_param(name + ".W_z", hidden_dim, input_dim)),
      U_z(matrix_param(name + ".U_z", hidden_dim, hidden_dim)),
      b_z(vector_param(name + ".b_z", hidden_dim)),
      W_r(matrix_param(name + ".W_r", hidden_dim, input_dim)),
      U_r(matrix_param(name + ".U_r", hidden_dim, hidden_dim)),
      b_r(vector_param(name + ".b_r", hidden_dim)),
      W_h(matrix_param(name + ".W_h", hidden_dim, input_dim)),
      U_h(matrix_param(name + ".U_h", hidden_dim, hidden_dim)),
      b_h(vector_param(name + ".b_h", hidden_dim)) {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError(name + ": zero dimension");
}

void GruCell::init(Rng& rng) {
  for (Param* p : {&W_z, &U_z, &W_r, &U_r, &W_h, &U_h}) glorot(*p, rng);
  for (Param* p : {&b_z, &b_r, &b_h}) p->value.fill(0.0);
}

Vec GruCell::forward(std::span<const double> x, std::span<const double> h, GruCache* cache) const {
  const std::size_t n = hidden_dim();
  require_dim(x.size(), input_dim(), W_z.name);
  require_dim(h.size(), n, U_z.name);

  Vec z(b_z.value.data().begin(), b_z.value.data().end());
  matvec(W_z.value, x, z);
  matvec(U_z.value, h, z);
  Vec r(b_r.value.data().begin(), b_r.value.data().end());
  matvec(W_r.value, x, r);
  matvec(U_r.value, h, r);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
  }
  Vec reset_h(n);
  for (std::size_t i = 0; i < n; ++i) reset_h[i] = r[i] * h[i];
  Vec candidate(b_h.value.data().begin(), b_h.value.data().end());
  matvec(W_h.value, x, candidate);
  matvec(U_h.value, reset_h, candidate);
  for (double& v : candidate) v = std::tanh(v);

  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * candidate[i];

  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h.assign(h.begin(), h.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->candidate = std::move(candidate);
    cache->reset_h = std::move(reset_h);
    cache->ready = true;
  }
  return out;
}

GruGrads GruCell::backward(const GruCache& c, std::span<const double> upstream) {
  if (!c.ready) throw StateError(W_z.name + ": backward called before forward");
  const std::size_t n = hidden_dim();
  require_dim(upstream.size(), n, W_z.name);

  GruGrads g{Vec(input_dim(), 0.0), Vec(n, 0.0)};
  Vec da_z(n), da_h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double up = upstream[i];
    g.dh[i] = up * (1.0 - c.z[i]);
    const double dz = up * (c.candidate[i] - c.h[i]);
    da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
    const double dcand = up * c.z[i];
    da_h[i] = dcand * (1.0 - c.candidate[i] * c.candidate[i]);
  }

  // candidate branch
  outer_acc(W_h.grad, da_h, c.x);
  outer_acc(U_h.grad, da_h, c.reset_h);
  axpy(1.0, da_h, b_h.grad.data());
  matvec_t(W_h.value, da_h, g.dx);
  Vec d_reset_h(n, 0.0);
  matvec_t(U_h.value, da_h, d_reset_h);
  Vec da_r(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.dh[i] += d_reset_h[i] * c.r[i];
    const double dr = d_reset_h[i] * c.h[i];
    da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
  }

  // update gate
  outer_acc(W_z.grad, da_z, c.x);
  outer_acc(U_z.grad, da_z, c.h);
  axpy(1.0, da_z, b_z.grad.data());
  matvec_t(W_z.value, da_z, g.dx);
  matvec_t(U_z.value, da_z, g.dh);

  // reset gate
  outer_acc(W_r.grad, da_r, c.x);
  outer_acc(U_r.grad, da_r, c.h);
  axpy(1.0, da_r, b_r.grad.data());
  matvec_t(W_r.value, da_r, g.dx);
  matvec_t(U_r.value, da_r, g.dh);
  return g;
}

void GruCell::collect(ParamRefs& out) {
  for (Param* p : {&W_z, &U_z, &b_z, &W_r, &U_r, &b_r, &W_h, &U_h, &b_h}) out.push_back(p);
}

// ---------------------------------------------------------------------------
// Free functions

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("cosine: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

std::pair<Vec, Vec> cosine_backward(std::span<const double> a, std::span<const double> b,
                                    double upstream) {
  Vec da(a.size(), 0.0), db(b.size(), 0.0);
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return {da, db};
  const double inv = 1.0 / (na * nb);
  const double c = dot(a, b) * inv;
  const double ka = c / (na * na), kb = c / (nb * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] = upstream * (b[i] * inv - ka * a[i]);
    db[i] = upstream * (a[i] * inv - kb * b[i]);
  }
  return {da, db};
}

Vec softmax(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("softmax: empty input");
  const double peak = *std::max_element(scores.begin(), scores.end());
  Vec out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - peak);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

double sgd_step(std::span<Param* const> params, double lr, double clip) {
  double sq = 0.0;
  for (const Param* p : params) {
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in " + p->name);
    for (double g : p->grad.data()) sq += g * g;
  }
  const double global = std::sqrt(sq);
  const double scale = (global > clip && global > 0.0) ? clip / global : 1.0;
  for (Param* p : params) {
    auto values = p->value.data();
    auto grads = p->grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * (scale * grads[i]);
    p->zero_grad();
  }
  return global;
}

double gradcheck_rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

GradcheckReport gradcheck(const std::function<double(bool)>& loss, std::span<Param* const> params,
                          const GradcheckOptions& options) {
  zero_grads(params);
  // rounding in the two loss evaluations grows with |loss|
  const double floor = 1e-5 * std::max(1.0, std::abs(loss(true)));
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  GradcheckReport report;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::vector<std::size_t> indices(p.value.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_entries_per_param > 0 && indices.size() > options.max_entries_per_param) {
      rng.shuffle(std::span<std::size_t>(indices));
      indices.resize(options.max_entries_per_param);
      std::sort(indices.begin(), indices.end());
    }
    for (const std::size_t i : indices) {
      const double original = p.value[i];
      p.value[i] = original + options.step;
      const double plus = loss(false);
      p.value[i] = original - options.step;
      const double minus = loss(false);
      p.value[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = gradcheck_rel_error(analytic[pi][i], numeric, floor);
      ++report.entries_checked;
      report.max_rel_error_fixed_floor =
          std::max(report.max_rel_error_fixed_floor, gradcheck_rel_error(analytic[pi][i], numeric, 1e-8));
      if (report.worst_param.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = analytic[pi][i];
        report.worst_numeric = numeric;
      }
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace momentnav

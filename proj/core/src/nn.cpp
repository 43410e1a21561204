#include "graspforge/nn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gf::nn {

void MlpSpec::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least one layer");
  if (act.size() != widths.size() - 1)
    throw std::invalid_argument("mlp activation count must match layer count");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("mlp widths must be >= 1");
}

MlpSpec MlpSpec::dense(std::vector<int> widths) {
  MlpSpec s;
  s.widths = std::move(widths);
  s.act.assign(s.widths.size() - 1, Activation::kRelu);
  s.act.back() = Activation::kIdentity;
  return s;
}

Tensor32 init_weight(int out, int in, Activation act, Rng& rng) {
  double bound = act == Activation::kRelu ? std::sqrt(6.0 / in)             // kaiming
                                          : std::sqrt(6.0 / (in + out));    // xavier
  Tensor32 w = Tensor32::zeros({out, in});
  for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

void init_mlp_params(NamedTensors& params, const std::string& prefix, const MlpSpec& spec,
                     Rng& rng) {
  spec.validate();
  for (int l = 0; l < spec.layer_count(); ++l) {
    std::string base = prefix + ".l" + std::to_string(l);
    params.add(base + ".w", init_weight(spec.widths[l + 1], spec.widths[l], spec.act[l], rng));
    params.add(base + ".b", Tensor32::zeros({spec.widths[l + 1]}));
  }
}

void zero_final_layer(NamedTensors& params, const std::string& prefix, const MlpSpec& spec) {
  std::string base = prefix + ".l" + std::to_string(spec.layer_count() - 1);
  Tensor32* w = params.find(base + ".w");
  Tensor32* b = params.find(base + ".b");
  if (!w || !b) throw std::out_of_range("zero_final_layer: missing " + base);
  std::fill(w->data.begin(), w->data.end(), 0.0f);
  std::fill(b->data.begin(), b->data.end(), 0.0f);
}

// ---------------------------------------------------------------------------
// Plain evaluation
// ---------------------------------------------------------------------------

namespace {

// y = x W^T + b over rows of x
void affine_rows(std::vector<float>& x, int rows, const Tensor32& w, const Tensor32& b,
                 std::vector<float>& y) {
  int in = w.cols(), out = w.rows();
  y.assign(static_cast<std::size_t>(rows) * out, 0.0f);
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      float acc = b.data[o];
      const float* xr = &x[static_cast<std::size_t>(r) * in];
      const float* wr = &w.data[static_cast<std::size_t>(o) * in];
      for (int k = 0; k < in; ++k) acc += xr[k] * wr[k];
      y[static_cast<std::size_t>(r) * out + o] = acc;
    }
}

}  // namespace

std::vector<float> mlp_eval(const NamedTensors& params, const std::string& prefix,
                            const MlpSpec& spec, const std::vector<float>& x) {
  spec.validate();
  if (x.size() % spec.input_width() != 0)
    throw std::invalid_argument("mlp_eval: input width mismatch");
  int rows = static_cast<int>(x.size()) / spec.input_width();
  std::vector<float> h = x, next;
  for (int l = 0; l < spec.layer_count(); ++l) {
    std::string base = prefix + ".l" + std::to_string(l);
    affine_rows(h, rows, params.get(base + ".w"), params.get(base + ".b"), next);
    if (spec.act[l] == Activation::kRelu)
      for (float& v : next) v = v > 0.0f ? v : 0.0f;
    h.swap(next);
  }
  return h;
}

std::vector<float> pointnet_eval(const NamedTensors& params, const std::string& prefix,
                                 const MlpSpec& point_spec, const std::vector<float>& cloud) {
  std::vector<float> h = mlp_eval(params, prefix, point_spec, cloud);
  int c = point_spec.output_width();
  int n = static_cast<int>(h.size()) / c;
  std::vector<float> pooled(c, 0.0f);
  for (int k = 0; k < c; ++k) {
    float best = h[k];
    for (int r = 1; r < n; ++r) best = std::max(best, h[static_cast<std::size_t>(r) * c + k]);
    pooled[k] = best;
  }
  return pooled;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState::AdamState(const NamedTensors& params, const AdamConfig& cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params) {
    (void)name;
    m_.emplace_back(t.data.size(), 0.0f);
    v_.emplace_back(t.data.size(), 0.0f);
  }
}

void AdamState::step(NamedTensors& params, const std::vector<Tensor32>& grads) {
  if (grads.size() != m_.size()) throw std::invalid_argument("adam: gradient count mismatch");
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  std::size_t idx = 0;
  for (auto& [name, t] : params) {
    (void)name;
    const Tensor32& g = grads[idx];
    if (g.data.size() != t.data.size()) throw std::invalid_argument("adam: gradient shape mismatch");
    auto& m = m_[idx];
    auto& v = v_[idx];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double gi = g.data[i];
      double mi = b1 * m[i] + (1.0 - b1) * gi;
      double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = mi / corr1;
      double vhat = vi / corr2;
      t.data[i] = static_cast<float>(t.data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
    ++idx;
  }
}

std::vector<Tensor32> collect_grads(Tape<float>& tape, const NamedTensors& params,
                                    const BoundParams<float>& bound) {
  std::vector<Tensor32> grads;
  grads.reserve(params.size());
  for (const auto& [name, t] : params) {
    int id = bound(name);
    if (tape.has_grad(id)) {
      grads.push_back(tape.grad(id));
    } else {
      grads.push_back(Tensor32::zeros(t.shape));
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Time embedding
// ---------------------------------------------------------------------------

std::vector<float> time_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time embedding dimension must be even and >= 2");
  std::vector<float> e(dim);
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    double a = t * freq;
    e[2 * i] = static_cast<float>(std::sin(a));
    e[2 * i + 1] = static_cast<float>(std::cos(a));
  }
  return e;
}

}  // namespace gf::nn

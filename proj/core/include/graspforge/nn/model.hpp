#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graspforge/nn/tape.hpp"
#include "graspforge/persistence.hpp"
#include "graspforge/rng.hpp"
#include "graspforge/tensor.hpp"

namespace gf::nn {

enum class Activation { kRelu, kIdentity };

// Dense stack description: widths[0] is the input width; layer i maps
// widths[i] -> widths[i+1] with act[i].
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> act;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  void validate() const;

  /// All-relu hidden layers, identity output.
  static MlpSpec dense(std::vector<int> widths);
};

// Kaiming-uniform fan-in for relu layers, Xavier-uniform for identity.
Tensor32 init_weight(int out, int in, Activation act, Rng& rng);

/// Adds `prefix.l{i}.w` / `prefix.l{i}.b` tensors for every layer.
void init_mlp_params(NamedTensors& params, const std::string& prefix, const MlpSpec& spec,
                     Rng& rng);
/// Zeroes the final layer of an already-initialized stack (residual modules).
void zero_final_layer(NamedTensors& params, const std::string& prefix, const MlpSpec& spec);

// ---------------------------------------------------------------------------
// Tape binding: leaf ids for a parameter store, plus forward builders usable
// at float (training) and double (gradient verification) precision.
// ---------------------------------------------------------------------------

template <class T>
struct BoundParams {
  Tape<T>* tape = nullptr;
  std::map<std::string, int> ids;

  int operator()(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw std::out_of_range("unbound parameter: " + name);
    return it->second;
  }
};

/// Registers every tensor as a tape leaf. `trainable` selects whether grads
/// are requested (frozen stacks still pass gradients through).
template <class T>
BoundParams<T> bind_params(Tape<T>& tape, const NamedTensors& params, bool trainable) {
  BoundParams<T> bound;
  bound.tape = &tape;
  for (const auto& [name, tensor] : params)
    bound.ids.emplace(name, tape.input(tensor_cast<T>(tensor), trainable));
  return bound;
}

template <class T>
int mlp_forward(Tape<T>& tape, const BoundParams<T>& p, const std::string& prefix, int x,
                const MlpSpec& spec) {
  spec.validate();
  int h = x;
  for (int l = 0; l < spec.layer_count(); ++l) {
    std::string base = prefix + ".l" + std::to_string(l);
    h = tape.affine(h, p(base + ".w"), p(base + ".b"));
    if (spec.act[l] == Activation::kRelu) h = tape.relu(h);
  }
  return h;
}

/// Shared point MLP then column-wise max pool: (N x 3) cloud -> embedding.
/// Permutation-invariant in the rows of x.
template <class T>
int pointnet_forward(Tape<T>& tape, const BoundParams<T>& p, const std::string& prefix, int cloud,
                     const MlpSpec& point_spec) {
  int h = mlp_forward(tape, p, prefix, cloud, point_spec);
  return tape.row_max(h);
}

// ---------------------------------------------------------------------------
// Plain (tape-free) forward evaluation for inference paths.
// ---------------------------------------------------------------------------

std::vector<float> mlp_eval(const NamedTensors& params, const std::string& prefix,
                            const MlpSpec& spec, const std::vector<float>& x);
/// cloud is row-major N x 3.
std::vector<float> pointnet_eval(const NamedTensors& params, const std::string& prefix,
                                 const MlpSpec& point_spec, const std::vector<float>& cloud);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a parameter store; moments keyed by tensor order.
class AdamState {
 public:
  AdamState(const NamedTensors& params, const AdamConfig& cfg);

  /// One update step; `grads` must align with the store's tensor order.
  void step(NamedTensors& params, const std::vector<Tensor32>& grads);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Reads grads for every parameter leaf out of a float tape, in store order.
std::vector<Tensor32> collect_grads(Tape<float>& tape, const NamedTensors& params,
                                    const BoundParams<float>& bound);

// ---------------------------------------------------------------------------
// Time embedding
// ---------------------------------------------------------------------------

/// Sinusoidal embedding at geometrically spaced frequencies; dim must be
/// even. Layout [sin(t w0), cos(t w0), sin(t w1), ...], w0 = 1.
std::vector<float> time_embedding(int t, int dim);

}  // namespace gf::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "usrn/common.hpp"

namespace usrn {

// Eigen maps over parameters pick their vector code path from the address, so
// storage alignment must not vary between runs for results to be reproducible.
using ParamStorage = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

/// A learnable tensor with its gradient accumulator.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  ParamStorage values;
  ParamStorage grads;

  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

using ParamList = std::vector<ParamTensor*>;

void zero_grads(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

enum class Activation { Relu, Snake, Sine };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// relu(x) = max(x, 0); snake(x) = x + sin^2(x); sine(x) = sin(x).
Scalar activate(Activation a, Scalar x);
Scalar activate_derivative(Activation a, Scalar x);

struct MlpSpec {
  int input_dim = 1;
  int hidden_layers = 2;
  int width = 64;
  int output_dim = 1;
  Activation activation = Activation::Relu;
  Scalar dropout_p = 0;  // only the MC-dropout baseline sets this
};

struct DenseLayer {
  ParamTensor weight;  // out x in, row-major
  ParamTensor bias;    // out

  int inputs() const { return static_cast<int>(weight.shape[1]); }
  int outputs() const { return static_cast<int>(weight.shape[0]); }
};

/// Fully connected network: hidden layers share one activation, the output layer
/// is the identity. Dropout (train mode only) follows every hidden activation.
struct Mlp {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  ParamList parameters();
  std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases. `prefix` names the tensors.
Mlp make_mlp(const MlpSpec& spec, Rng& rng, const std::string& prefix = "mlp");

struct MlpCache {
  const Mlp* owner = nullptr;
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
  std::vector<Matrix> masks;   // dropout scale (0 or 1/(1-p)) per hidden layer; empty if unused
};

/// Batched forward pass. `rng` is required only for train mode with dropout.
Matrix mlp_forward(const Mlp& mlp, const Matrix& x, Mode mode, Rng* rng = nullptr,
                   MlpCache* cache = nullptr);

/// Accumulates (+=) parameter gradients and returns dL/dx.
Matrix mlp_backward(Mlp& mlp, const MlpCache& cache, const Matrix& dl_dy);

// ---------------------------------------------------------------------------
// Optimization

struct AdamState {
  std::vector<Scalar> m;
  std::vector<Scalar> v;
  std::int64_t t = 0;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
};

AdamState make_adam_state(const ParamList& params);

/// One bias-corrected Adam update over every tensor in order. Gradients are left
/// untouched; the caller zeroes them.
void adam_step(const ParamList& params, AdamState& state, Scalar lr);

struct LrSchedule {
  Scalar initial = 5e-3;
  Scalar floor = 1e-7;
  std::int64_t t_max = 1;
};

/// floor + (initial - floor) * (1 + cos(pi t / t_max)) / 2 for t in [0, t_max].
Scalar cosine_lr_at(const LrSchedule& s, std::int64_t t);

/// Worst relative error between analytic gradients already stored in `params`
/// and central differences of `loss`. Each coordinate uses step h * max(1, |theta|);
/// the denominator is max(|analytic|, |numeric|, 1e-12). Parameters are restored.
struct GradCheckReport {
  Scalar max_relative_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  Scalar worst_analytic = 0;
  Scalar worst_numeric = 0;
  std::size_t checked = 0;
};

GradCheckReport finite_difference_check(const std::function<Scalar()>& loss,
                                        const ParamList& params, Scalar h,
                                        std::size_t max_per_tensor = 0);

}  // namespace usrn

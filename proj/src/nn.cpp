// SPDX-License-Identifier: Apache-2.0
#include "usrn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "usrn/errors.hpp"

namespace usrn {

ParamTensor::ParamTensor(std::string n, std::vector<std::size_t> s)
    : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (const auto d : shape) count *= d;
  values.assign(count, Scalar(0));
  grads.assign(count, Scalar(0));
}

void ParamTensor::zero_grad() { std::fill(grads.begin(), grads.end(), Scalar(0)); }

void zero_grads(const ParamList& params) {
  for (auto* p : params) p->zero_grad();
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Snake: return "snake";
    case Activation::Sine: return "sine";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "snake") return Activation::Snake;
  if (name == "sine") return Activation::Sine;
  throw InvalidArgument("unknown activation '" + name + "'");
}

Scalar activate(Activation a, Scalar x) {
  switch (a) {
    case Activation::Relu: return x > 0 ? x : Scalar(0);
    case Activation::Snake: {
      const Scalar s = std::sin(x);
      return x + s * s;
    }
    case Activation::Sine: return std::sin(x);
  }
  return x;
}

Scalar activate_derivative(Activation a, Scalar x) {
  switch (a) {
    case Activation::Relu: return x > 0 ? Scalar(1) : Scalar(0);
    case Activation::Snake: return Scalar(1) + std::sin(2 * x);
    case Activation::Sine: return std::cos(x);
  }
  return 1;
}

ParamList Mlp::parameters() {
  ParamList out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Mlp make_mlp(const MlpSpec& spec, Rng& rng, const std::string& prefix) {
  if (spec.input_dim < 1 || spec.output_dim < 1 || spec.hidden_layers < 0 ||
      (spec.hidden_layers > 0 && spec.width < 1))
    throw InvalidArgument("invalid MLP dimensions");
  if (!(spec.dropout_p >= 0 && spec.dropout_p < 1))
    throw InvalidArgument("dropout probability must lie in [0, 1)");
  Mlp mlp;
  mlp.spec = spec;
  int in = spec.input_dim;
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    const int out = l == spec.hidden_layers ? spec.output_dim : spec.width;
    DenseLayer layer;
    const std::string tag = prefix + ".layer" + std::to_string(l);
    layer.weight = ParamTensor(tag + ".weight", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
    layer.bias = ParamTensor(tag + ".bias", {static_cast<std::size_t>(out)});
    const Scalar bound = std::sqrt(Scalar(6) / Scalar(in + out));
    for (auto& w : layer.weight.values) w = uniform(rng, -bound, bound);
    mlp.layers.push_back(std::move(layer));
    in = out;
  }
  return mlp;
}

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

ConstMap weight_map(const DenseLayer& l) {
  return ConstMap(l.weight.values.data(), l.outputs(), l.inputs());
}

}  // namespace

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, Mode mode, Rng* rng, MlpCache* cache) {
  if (mlp.layers.empty()) throw InvalidArgument("MLP has no layers");
  if (x.cols() != mlp.layers.front().inputs())
    throw InvalidArgument("MLP input width " + std::to_string(x.cols()) + " != expected " +
                          std::to_string(mlp.layers.front().inputs()));
  const bool dropout = mode == Mode::Train && mlp.spec.dropout_p > 0;
  if (dropout && rng == nullptr) throw InvalidArgument("dropout in train mode needs an rng");
  if (cache) {
    cache->owner = &mlp;
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks.clear();
  }
  const Scalar keep_scale = dropout ? Scalar(1) / (Scalar(1) - mlp.spec.dropout_p) : Scalar(1);

  Matrix a = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(layer.bias.values.data(),
                                                                 layer.outputs());
    Matrix z = a * weight_map(layer).transpose();
    z.rowwise() += b;
    if (cache) cache->inputs.push_back(std::move(a));
    if (l + 1 == mlp.layers.size()) return z;

    a = z.unaryExpr([act = mlp.spec.activation](Scalar v) { return activate(act, v); });
    if (dropout) {
      Matrix mask(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = uniform01(*rng) < mlp.spec.dropout_p ? Scalar(0) : keep_scale;
      a.array() *= mask.array();
      if (cache) cache->masks.push_back(std::move(mask));
    }
    if (cache) cache->pre.push_back(std::move(z));
  }
  return a;  // unreachable: the last layer returns above
}

Matrix mlp_backward(Mlp& mlp, const MlpCache& cache, const Matrix& dl_dy) {
  if (cache.owner != &mlp || cache.inputs.size() != mlp.layers.size() ||
      cache.pre.size() + 1 != mlp.layers.size())
    throw InvalidArgument("stale or mismatched MLP cache");
  if (dl_dy.rows() != cache.inputs.front().rows() || dl_dy.cols() != mlp.layers.back().outputs())
    throw InvalidArgument("upstream gradient shape does not match the cached forward pass");
  const bool has_masks = !cache.masks.empty();

  Matrix g = dl_dy;
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    auto& layer = mlp.layers[li];
    const Matrix& input = cache.inputs[li];
    MutMap dw(layer.weight.grads.data(), layer.outputs(), layer.inputs());
    dw.noalias() += g.transpose() * input;
    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> db(layer.bias.grads.data(), layer.outputs());
    db += g.colwise().sum();
    Matrix g_in = g * weight_map(layer);
    if (li > 0) {
      const Matrix& z = cache.pre[li - 1];
      g_in.array() *=
          z.unaryExpr([act = mlp.spec.activation](Scalar v) { return activate_derivative(act, v); })
              .array();
      if (has_masks) g_in.array() *= cache.masks[li - 1].array();
    }
    g = std::move(g_in);
  }
  return g;
}

AdamState make_adam_state(const ParamList& params) {
  AdamState s;
  const std::size_t n = parameter_count(params);
  s.m.assign(n, Scalar(0));
  s.v.assign(n, Scalar(0));
  return s;
}

void adam_step(const ParamList& params, AdamState& state, Scalar lr) {
  if (state.m.size() != parameter_count(params))
    throw InvalidArgument("Adam state does not match the parameter set");
  ++state.t;
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.t));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.t));
  std::size_t offset = 0;
  for (auto* p : params) {
    Scalar* m = state.m.data() + offset;
    Scalar* v = state.v.data() + offset;
    const std::size_t n = p->size();
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar g = p->grads[i];
      m[i] = state.beta1 * m[i] + (1 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1 - state.beta2) * g * g;
      const Scalar m_hat = m[i] / c1;
      const Scalar v_hat = v[i] / c2;
      p->values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    offset += n;
  }
}

Scalar cosine_lr_at(const LrSchedule& s, std::int64_t t) {
  if (s.t_max < 1) throw InvalidArgument("learning-rate schedule needs t_max >= 1");
  if (!(s.initial > s.floor && s.floor >= 0))
    throw InvalidArgument("learning-rate schedule needs initial > floor >= 0");
  if (t < 0 || t > s.t_max) throw InvalidArgument("step outside the learning-rate schedule");
  const Scalar phase = std::numbers::pi_v<Scalar> * Scalar(t) / Scalar(s.t_max);
  return s.floor + Scalar(0.5) * (s.initial - s.floor) * (Scalar(1) + std::cos(phase));
}

GradCheckReport finite_difference_check(const std::function<Scalar()>& loss,
                                        const ParamList& params, Scalar h,
                                        std::size_t max_per_tensor) {
  GradCheckReport report;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    ParamTensor& p = *params[ti];
    const std::size_t n = p.size();
    const std::size_t stride =
        (max_per_tensor == 0 || n <= max_per_tensor) ? 1 : (n + max_per_tensor - 1) / max_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const Scalar original = p.values[i];
      const Scalar step = h * std::max(Scalar(1), std::abs(original));
      p.values[i] = original + step;
      const Scalar up = loss();
      p.values[i] = original - step;
      const Scalar down = loss();
      p.values[i] = original;
      const Scalar numeric = (up - down) / (2 * step);
      const Scalar analytic = p.grads[i];
      const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), Scalar(1e-12)});
      const Scalar rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<Scalar>::infinity();
        report.worst_tensor = ti;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace usrn

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "egowm/core/autograd.hpp"
#include "egowm/core/layer_spec.hpp"
#include "egowm/core/ops.hpp"
#include "egowm/core/random.hpp"

namespace egowm {

/// Ordered registry of named parameters. Handles share storage with the modules that created them.
template <typename T>
class ParameterSet {
 public:
  Parameter<T> add(const std::string& name, Tensor<T> value) {
    for (const auto& p : params_)
      if (p.name() == name) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(name, std::move(value));
    return params_.back();
  }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name() == name) return &p;
    return nullptr;
  }

  std::vector<Parameter<T>*> pointers() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Parameter<T>> params_;
};

enum class Init { uniform_fan_in, zeros };

namespace detail {
template <typename T>
Tensor<T> init_weight(Shape shape, int64_t fan_in, Init init, Rng& rng) {
  if (init == Init::zeros) return Tensor<T>(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_tensor<T>(std::move(shape), -bound, bound);
}
}  // namespace detail

/// Convolution layer (conv2d, conv3d, causal_conv3d, patchify3d) backed by a LayerSpec.
template <typename T>
class Conv {
 public:
  Conv() = default;
  Conv(ParameterSet<T>& ps, const std::string& name, LayerSpec spec, Rng& rng, Init init = Init::uniform_fan_in)
      : spec_(spec) {
    spec_.validate();
    if (!spec_.is_conv()) throw ConfigError(name + ": Conv requires a convolution LayerSpec");
    const bool two_d = spec_.kind == LayerKind::conv2d;
    Shape ws = two_d ? Shape{spec_.channels_out, spec_.channels_in, spec_.kernel[1], spec_.kernel[2]}
                     : Shape{spec_.channels_out, spec_.channels_in, spec_.kernel[0], spec_.kernel[1], spec_.kernel[2]};
    const int64_t fan_in = numel(ws) / spec_.channels_out;
    weight_ = ps.add(name + ".weight", detail::init_weight<T>(ws, fan_in, init, rng));
    bias_ = ps.add(name + ".bias", Tensor<T>(Shape{spec_.channels_out}));
  }

  Var<T> operator()(const Var<T>& x) const {
    infer_shape(spec_, x.shape());
    if (spec_.kind == LayerKind::conv2d) {
      return ops::conv2d(x, weight_.var(), bias_.var(), {spec_.stride[1], spec_.stride[2]}, {spec_.padding[1], spec_.padding[2]});
    }
    return ops::conv3d(x, weight_.var(), bias_.var(), spec_.stride, spec_.pad_lo(), spec_.pad_hi());
  }

  const LayerSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Parameter<T> weight_, bias_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, int64_t din, int64_t dout, Rng& rng, Init init = Init::uniform_fan_in,
         bool with_bias = true)
      : spec_(LayerSpec::linear(din, dout)) {
    weight_ = ps.add(name + ".weight", detail::init_weight<T>(Shape{dout, din}, din, init, rng));
    if (with_bias) bias_ = ps.add(name + ".bias", Tensor<T>(Shape{dout}));
  }

  Var<T> operator()(const Var<T>& x) const {
    return ops::linear(x, weight_.var(), bias_.defined() ? bias_.var() : Var<T>{});
  }

  const LayerSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Parameter<T> weight_, bias_;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  /// `per_frame` normalizes each time step of a [C,T,H,W] input separately (keeps causal stacks causal).
  GroupNorm(ParameterSet<T>& ps, const std::string& name, int64_t channels, int64_t groups, bool per_frame = false)
      : spec_(LayerSpec::group_norm(channels, groups)), per_frame_(per_frame) {
    spec_.validate();
    scale_ = ps.add(name + ".scale", Tensor<T>(Shape{channels}, T{1}));
    shift_ = ps.add(name + ".shift", Tensor<T>(Shape{channels}));
  }

  Var<T> operator()(const Var<T>& x) const {
    if (per_frame_) return ops::frame_group_norm(x, spec_.groups, scale_.var(), shift_.var());
    return ops::group_norm(x, spec_.groups, scale_.var(), shift_.var());
  }

  const LayerSpec& spec() const { return spec_; }

 private:
  LayerSpec spec_;
  bool per_frame_ = false;
  Parameter<T> scale_, shift_;
};

/// Largest group count in {8,4,2,1} dividing the channel count.
inline int64_t default_groups(int64_t channels) {
  for (int64_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace egowm

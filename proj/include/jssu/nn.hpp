#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jssu/ops.hpp"
#include "jssu/tensor.hpp"

namespace jssu {

using Rng = std::mt19937_64;

/// Named parameters in registration order. Paths are canonical
/// ("sr/stage0/prox/entry/weight") and key checkpoints.
template <typename T>
class ParamSet {
public:
    Tensor<T> add(const std::string& path, Tensor<T> t, bool trainable = true) {
        if (index_.count(path)) throw std::invalid_argument("duplicate parameter path: " + path);
        t.set_requires_grad(trainable);
        index_[path] = entries_.size();
        entries_.push_back({path, t, trainable});
        return t;
    }

    struct Entry {
        std::string path;
        Tensor<T> tensor;
        bool trainable;
    };

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    const Entry* find(const std::string& path) const {
        auto it = index_.find(path);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    std::size_t scalar_count(const std::string& prefix = "") const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.trainable && e.path.rfind(prefix, 0) == 0) n += e.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    /// Toggles gradient tracking on every trainable entry under `prefix`.
    void set_trainable(const std::string& prefix, bool on) {
        for (auto& e : entries_)
            if (e.trainable && e.path.rfind(prefix, 0) == 0) e.tensor.set_requires_grad(on);
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Registers parameters under a path prefix and initializes them from a
/// shared generator: fan-in scaled uniform (He) weights, zero biases.
template <typename T>
class Builder {
public:
    Builder(ParamSet<T>& params, Rng& rng, std::string prefix = "")
        : params_(&params), rng_(&rng), prefix_(std::move(prefix)) {}

    Builder sub(const std::string& name) const { return Builder(*params_, *rng_, join(name)); }

    Tensor<T> he_uniform(const std::string& name, Shape shape, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<T> v(numel(shape));
        for (auto& x : v) x = static_cast<T>(dist(*rng_));
        return params_->add(join(name), Tensor<T>(std::move(shape), std::move(v)));
    }

    Tensor<T> zeros(const std::string& name, Shape shape) {
        return params_->add(join(name), Tensor<T>(std::move(shape)));
    }

    Tensor<T> constant(const std::string& name, Shape shape, T value) {
        return params_->add(join(name), Tensor<T>(std::move(shape), value));
    }

    Tensor<T> buffer(const std::string& name, Tensor<T> t) { return params_->add(join(name), t, false); }

    Rng& rng() { return *rng_; }
    const std::string& prefix() const { return prefix_; }

private:
    std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "/" + name; }

    ParamSet<T>* params_;
    Rng* rng_;
    std::string prefix_;
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;
    Tensor<T> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(Builder<T> b, int k, int cin, int cout, int stride_ = 1, bool zero_init = false)
        : stride(stride_), pad(k / 2) {
        weight = zero_init ? b.zeros("weight", {k, k, cin, cout}) : b.he_uniform("weight", {k, k, cin, cout}, k * k * cin);
        bias = b.zeros("bias", {cout});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

/// Learned adjoint-style upsampling step: conv_transpose2d plus bias.
template <typename T>
struct ConvTranspose2d {
    Tensor<T> weight;  // [k, k, Cout, Cin] as the kernel of the matching forward conv
    Tensor<T> bias;
    int stride = 1;

    ConvTranspose2d() = default;
    ConvTranspose2d(Builder<T> b, int k, int cin, int cout, int stride_) : stride(stride_) {
        // Each output receives about k*k*cin / stride^2 contributions.
        weight = b.he_uniform("weight", {k, k, cout, cin}, std::max(1, k * k * cin / (stride_ * stride_)));
        bias = b.zeros("bias", {cout});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return bias_add(conv_transpose2d(x, weight, stride), bias); }
};

template <typename T>
struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;

    Linear() = default;
    Linear(Builder<T> b, int din, int dout) {
        weight = b.he_uniform("weight", {din, dout}, din);
        bias = b.zeros("bias", {dout});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

/// Two affine layers with a ReLU between them, applied to pixel rows [N, din].
template <typename T>
struct Mlp {
    Linear<T> first;
    Linear<T> second;

    Mlp() = default;
    Mlp(Builder<T> b, int din, int hidden, int dout) : first(b.sub("fc0"), din, hidden), second(b.sub("fc1"), hidden, dout) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return second(relu(first(x))); }
};

/// conv-ReLU-conv with identity skip.
template <typename T>
struct ResBlock {
    Conv2d<T> conv0;
    Conv2d<T> conv1;

    ResBlock() = default;
    ResBlock(Builder<T> b, int features) : conv0(b.sub("conv0"), 3, features, features), conv1(b.sub("conv1"), 3, features, features) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return add(x, conv1(relu(conv0(x)))); }
};

/// Squeeze-and-excitation gate: adaptive average pool, bottleneck MLP, sigmoid.
template <typename T>
struct ChannelAttention {
    Linear<T> squeeze;
    Linear<T> excite;

    ChannelAttention() = default;
    ChannelAttention(Builder<T> b, int features, int reduction)
        : squeeze(b.sub("squeeze"), features, std::max(1, features / reduction)),
          excite(b.sub("excite"), std::max(1, features / reduction), features) {}

    Tensor<T> gate(const Tensor<T>& x) const {
        const int c = x.dim(2);
        Tensor<T> pooled = reshape(channel_mean(x), {1, c});
        return reshape(sigmoid(excite(relu(squeeze(pooled)))), {c});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return channel_scale(x, gate(x)); }
};

/// Residual channel attention block: conv-ReLU-conv, channel attention, skip.
template <typename T>
struct Rcab {
    Conv2d<T> conv0;
    Conv2d<T> conv1;
    ChannelAttention<T> attention;

    Rcab() = default;
    Rcab(Builder<T> b, int features, int reduction)
        : conv0(b.sub("conv0"), 3, features, features),
          conv1(b.sub("conv1"), 3, features, features),
          attention(b.sub("ca"), features, reduction) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return add(x, attention(conv1(relu(conv0(x))))); }
};

/// Fills every trainable parameter under `prefix` with zeros.
template <typename T>
void zero_parameters(ParamSet<T>& params, const std::string& prefix) {
    for (auto& e : params.entries())
        if (e.path.rfind(prefix, 0) == 0)
            for (auto& v : e.tensor.mutable_data()) v = T(0);
}

}  // namespace jssu

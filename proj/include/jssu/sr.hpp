#pragma once

#include <vector>

#include "jssu/config.hpp"
#include "jssu/nn.hpp"

// Spatial super-resolution: K unfolded proximal-gradient stages mapping the
// LR-MSI f [h, w, c] to an HR-MSI estimate [h*s, w*s, c].
namespace jssu {

/// Ascending prime factors of s; empty for s = 1.
std::vector<int> prime_factors(int s);

/// Residual learned prox: entry conv, residual blocks, exit conv, global skip.
template <typename T>
struct ProxSr {
    Conv2d<T> entry;
    std::vector<ResBlock<T>> blocks;
    Conv2d<T> exit;

    ProxSr() = default;
    ProxSr(Builder<T> b, int channels, int features, int res_blocks);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct SrStage {
    Tensor<T> tau;
    std::vector<int> down_factors;      // stride of each down conv, in application order
    std::vector<Conv2d<T>> down;        // kernel 2p+1, stride p
    std::vector<int> up_factors;        // stride of each up step, in application order
    std::vector<ConvTranspose2d<T>> up; // back-projection / forward variants
    std::vector<Conv2d<T>> lowpass;     // forward variant only
    Conv2d<T> refine;                   // back-projection variant only
    ProxSr<T> prox;
};

template <typename T>
struct SrModule {
    ModelConfig config;
    std::vector<SrStage<T>> stages;

    SrModule() = default;
    SrModule(Builder<T> b, const ModelConfig& config);
};

template <typename T>
struct UnfoldResult {
    Tensor<T> output;
    std::vector<Tensor<T>> per_stage;
};

/// Prime-factor chain of strided convolutions: [H, W, c] -> [H/s, W/s, c].
template <typename T>
Tensor<T> down_sr(const Tensor<T>& u, const SrStage<T>& stage);

/// Bias-free adjoint of down_sr's linear part.
template <typename T>
Tensor<T> down_sr_adjoint(const Tensor<T>& r, const SrStage<T>& stage);

/// Learned upsampler [h, w, c] -> [h*s, w*s, c] selected by the configuration.
template <typename T>
Tensor<T> up_operator(const Tensor<T>& x, const SrStage<T>& stage, const ModelConfig& config);

/// Up(down_sr(u) - f), the learned back-projected residual direction.
template <typename T>
Tensor<T> up_sr(const Tensor<T>& u, const Tensor<T>& f, const SrStage<T>& stage, const ModelConfig& config);

template <typename T>
Tensor<T> prox_sr(const Tensor<T>& x, const SrStage<T>& stage) {
    return stage.prox(x);
}

/// One stage: prox(u -/+ tau * up_sr(u, f)).
template <typename T>
Tensor<T> sr_stage(const Tensor<T>& u, const Tensor<T>& f, const SrStage<T>& stage, const ModelConfig& config);

/// u0 = bicubic(f, s), then every stage in order.
template <typename T>
UnfoldResult<T> sr_unfold(const Tensor<T>& f, const SrModule<T>& module);

}  // namespace jssu

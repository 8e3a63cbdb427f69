#pragma once

#include <vector>

#include "jssu/config.hpp"
#include "jssu/nn.hpp"
#include "jssu/sr.hpp"

// Fusion of the HR-MSI estimate u_SR [H, W, c] and the LR-HSI estimate
// u_SSR [h, w, C] into an HR-HSI [H, W, C].
namespace jssu {

/// Low-frequency estimator: three 3x3 convs with ReLU between, output C bands.
template <typename T>
struct Lfe {
    Conv2d<T> conv0;
    Conv2d<T> conv1;
    Conv2d<T> conv2;

    Lfe() = default;
    Lfe(Builder<T> b, int cin, int features, int cout)
        : conv0(b.sub("conv0"), 3, cin, features),
          conv1(b.sub("conv1"), 3, features, features),
          conv2(b.sub("conv2"), 3, features, cout) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2(relu(conv1(relu(conv0(x))))); }
};

/// High-frequency injector over concat(u_SR, u_SSR_up, u_bar_SR); the branch
/// output is added to u_SSR_up.
template <typename T>
struct Hfi {
    Conv2d<T> entry;
    std::vector<ResBlock<T>> blocks;
    Conv2d<T> exit;

    Hfi() = default;
    Hfi(Builder<T> b, int msi_bands, int hsi_bands, int features, int res_blocks = 2);
    Tensor<T> operator()(const Tensor<T>& u_sr, const Tensor<T>& u_ssr_up, const Tensor<T>& u_bar_sr) const;
};

template <typename T>
struct FusionContext {
    Tensor<T> u_bar_sr;   // low frequencies of u_SR in C bands
    Tensor<T> u_bar_ssr;  // low frequencies of the upsampled u_SSR
    Tensor<T> u_hat_sr;   // geometry carrier
    double epsilon = 1e-6;
};

/// Guided prox: entry conv over concat(x, u_SR), residual blocks, exit conv, skip from x.
template <typename T>
struct ProxFus {
    Conv2d<T> entry;
    std::vector<ResBlock<T>> blocks;
    Conv2d<T> exit;

    ProxFus() = default;
    ProxFus(Builder<T> b, int msi_bands, int hsi_bands, int features, int res_blocks);
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& u_sr) const;
};

template <typename T>
struct FusionStage {
    Tensor<T> tau;
    Lfe<T> lfe_sr;
    Lfe<T> lfe_ssr;
    Hfi<T> hfi;
    ProxFus<T> prox;
};

template <typename T>
struct FusionModule {
    ModelConfig config;
    Lfe<T> init_lfe_sr;
    Lfe<T> init_lfe_ssr;
    Hfi<T> init_hfi;
    std::vector<FusionStage<T>> stages;

    FusionModule() = default;
    FusionModule(Builder<T> b, const ModelConfig& config);
};

/// Bicubic down by s then bicubic up by s.
template <typename T>
Tensor<T> lowpass_input(const Tensor<T>& u_sr, int scale);

/// Builds u_bar_SR, u_bar_SSR and u_hat_SR from one LFE pair and an HFI.
template <typename T>
FusionContext<T> make_fusion_context(const Tensor<T>& u_sr, const Tensor<T>& u_ssr_up, int scale, const Lfe<T>& lfe_sr,
                                     const Lfe<T>& lfe_ssr, const Hfi<T>& hfi, double epsilon);

/// u_bar_SR * (u * u_bar_SR - u_bar_SSR * u_hat_SR).
template <typename T>
Tensor<T> fusion_gradient(const Tensor<T>& u, const FusionContext<T>& ctx);

/// 0.5 * ||u * u_bar_SR - u_bar_SSR * u_hat_SR||^2.
template <typename T>
Tensor<T> fusion_energy(const Tensor<T>& u, const FusionContext<T>& ctx);

/// (u_bar_SSR * u_hat_SR) / u_bar_SR with |u_bar_SR| clamped to at least epsilon.
template <typename T>
Tensor<T> fusion_stationary_point(const FusionContext<T>& ctx);

template <typename T>
Tensor<T> prox_fus(const Tensor<T>& x, const Tensor<T>& u_sr, const FusionStage<T>& stage) {
    return stage.prox(x, u_sr);
}

/// u0 from the initial LFE/HFI; then u <- prox(u - tau * grad, u_SR) per stage.
template <typename T>
UnfoldResult<T> fusion_unfold(const Tensor<T>& u_sr, const Tensor<T>& u_ssr, const FusionModule<T>& module);

}  // namespace jssu

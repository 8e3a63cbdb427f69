#include "jssu/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jssu {

template <typename T>
Hfi<T>::Hfi(Builder<T> b, int msi_bands, int hsi_bands, int features, int res_blocks)
    : entry(b.sub("entry"), 3, msi_bands + 2 * hsi_bands, features) {
    for (int i = 0; i < res_blocks; ++i) blocks.emplace_back(b.sub("block" + std::to_string(i)), features);
    exit = Conv2d<T>(b.sub("exit"), 3, features, hsi_bands, 1, true);
}

template <typename T>
Tensor<T> Hfi<T>::operator()(const Tensor<T>& u_sr, const Tensor<T>& u_ssr_up, const Tensor<T>& u_bar_sr) const {
    if (u_sr.dim(0) != u_ssr_up.dim(0) || u_sr.dim(1) != u_ssr_up.dim(1) || u_ssr_up.shape() != u_bar_sr.shape())
        throw DimensionError("hfi: inputs " + shape_str(u_sr.shape()) + ", " + shape_str(u_ssr_up.shape()) + ", " +
                             shape_str(u_bar_sr.shape()) + " do not share a grid");
    Tensor<T> h = entry(concat_channels<T>({u_sr, u_ssr_up, u_bar_sr}));
    for (const auto& block : blocks) h = block(h);
    return add(u_ssr_up, exit(h));
}

template <typename T>
ProxFus<T>::ProxFus(Builder<T> b, int msi_bands, int hsi_bands, int features, int res_blocks)
    : entry(b.sub("entry"), 3, hsi_bands + msi_bands, features) {
    for (int i = 0; i < res_blocks; ++i) blocks.emplace_back(b.sub("block" + std::to_string(i)), features);
    exit = Conv2d<T>(b.sub("exit"), 3, features, hsi_bands, 1, true);
}

template <typename T>
Tensor<T> ProxFus<T>::operator()(const Tensor<T>& x, const Tensor<T>& u_sr) const {
    if (x.dim(0) != u_sr.dim(0) || x.dim(1) != u_sr.dim(1))
        throw DimensionError("prox_fus: " + shape_str(x.shape()) + " vs guide " + shape_str(u_sr.shape()));
    Tensor<T> h = entry(concat_channels<T>({x, u_sr}));
    for (const auto& block : blocks) h = block(h);
    return add(x, exit(h));
}

template <typename T>
FusionModule<T>::FusionModule(Builder<T> b, const ModelConfig& cfg) : config(cfg) {
    const int c = cfg.msi_bands;
    const int C = cfg.hsi_bands;
    const int F = cfg.features;
    init_lfe_sr = Lfe<T>(b.sub("init/lfe_sr"), c, F, C);
    init_lfe_ssr = Lfe<T>(b.sub("init/lfe_ssr"), C, F, C);
    init_hfi = Hfi<T>(b.sub("init/hfi"), c, C, F);
    for (int k = 0; k < cfg.stages; ++k) {
        Builder<T> sb = b.sub("stage" + std::to_string(k));
        FusionStage<T> st;
        st.tau = sb.constant("tau", {1}, static_cast<T>(cfg.tau_init));
        st.lfe_sr = Lfe<T>(sb.sub("lfe_sr"), c, F, C);
        st.lfe_ssr = Lfe<T>(sb.sub("lfe_ssr"), C, F, C);
        st.hfi = Hfi<T>(sb.sub("hfi"), c, C, F);
        st.prox = ProxFus<T>(sb.sub("prox"), c, C, F, cfg.res_blocks);
        stages.push_back(std::move(st));
    }
}

template <typename T>
Tensor<T> lowpass_input(const Tensor<T>& u_sr, int scale) {
    const int H = u_sr.dim(0);
    const int W = u_sr.dim(1);
    if (H % scale != 0 || W % scale != 0)
        throw DimensionError("lowpass_input: scale " + std::to_string(scale) + " does not divide " + shape_str(u_sr.shape()));
    return bicubic_resize(bicubic_resize(u_sr, H / scale, W / scale), H, W);
}

template <typename T>
FusionContext<T> make_fusion_context(const Tensor<T>& u_sr, const Tensor<T>& u_ssr_up, int scale, const Lfe<T>& lfe_sr,
                                     const Lfe<T>& lfe_ssr, const Hfi<T>& hfi, double epsilon) {
    FusionContext<T> ctx;
    ctx.epsilon = epsilon;
    ctx.u_bar_sr = lfe_sr(lowpass_input(u_sr, scale));
    ctx.u_bar_ssr = lfe_ssr(u_ssr_up);
    ctx.u_hat_sr = hfi(u_sr, u_ssr_up, ctx.u_bar_sr);
    return ctx;
}

template <typename T>
Tensor<T> fusion_gradient(const Tensor<T>& u, const FusionContext<T>& ctx) {
    if (u.shape() != ctx.u_bar_sr.shape() || u.shape() != ctx.u_bar_ssr.shape() || u.shape() != ctx.u_hat_sr.shape())
        throw DimensionError("fusion_gradient: context does not match " + shape_str(u.shape()));
    return mul(ctx.u_bar_sr, sub(mul(u, ctx.u_bar_sr), mul(ctx.u_bar_ssr, ctx.u_hat_sr)));
}

template <typename T>
Tensor<T> fusion_energy(const Tensor<T>& u, const FusionContext<T>& ctx) {
    return half_squared_norm(sub(mul(u, ctx.u_bar_sr), mul(ctx.u_bar_ssr, ctx.u_hat_sr)));
}

template <typename T>
Tensor<T> fusion_stationary_point(const FusionContext<T>& ctx) {
    const auto bar_sr = ctx.u_bar_sr.data();
    const auto bar_ssr = ctx.u_bar_ssr.data();
    const auto hat = ctx.u_hat_sr.data();
    std::vector<T> out(bar_sr.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double d = bar_sr[i];
        if (std::abs(d) < ctx.epsilon) d = d < 0 ? -ctx.epsilon : ctx.epsilon;
        out[i] = static_cast<T>(static_cast<double>(bar_ssr[i]) * hat[i] / d);
    }
    return Tensor<T>(ctx.u_bar_sr.shape(), std::move(out));
}

template <typename T>
UnfoldResult<T> fusion_unfold(const Tensor<T>& u_sr, const Tensor<T>& u_ssr, const FusionModule<T>& module) {
    if (module.stages.empty()) throw std::invalid_argument("fusion_unfold: at least one stage required");
    const int s = module.config.scale;
    if (u_sr.ndim() != 3 || u_ssr.ndim() != 3 || u_sr.dim(0) != u_ssr.dim(0) * s || u_sr.dim(1) != u_ssr.dim(1) * s)
        throw DimensionError("fusion_unfold: u_SR " + shape_str(u_sr.shape()) + " and u_SSR " +
                             shape_str(u_ssr.shape()) + " are not related by scale " + std::to_string(s));
    const double eps = module.config.fusion_epsilon;
    const Tensor<T> u_ssr_up = bicubic_resize(u_ssr, u_sr.dim(0), u_sr.dim(1));
    UnfoldResult<T> result;
    const FusionContext<T> init =
        make_fusion_context(u_sr, u_ssr_up, s, module.init_lfe_sr, module.init_lfe_ssr, module.init_hfi, eps);
    Tensor<T> u = init.u_hat_sr;
    for (const auto& stage : module.stages) {
        const FusionContext<T> ctx = make_fusion_context(u_sr, u_ssr_up, s, stage.lfe_sr, stage.lfe_ssr, stage.hfi, eps);
        u = prox_fus(sub(u, scale_by(fusion_gradient(u, ctx), stage.tau)), u_sr, stage);
        result.per_stage.push_back(u);
    }
    result.output = u;
    return result;
}

#define JSSU_INSTANTIATE_FUSION(T)                                                                           \
    template struct Hfi<T>;                                                                                  \
    template struct ProxFus<T>;                                                                              \
    template struct FusionModule<T>;                                                                         \
    template Tensor<T> lowpass_input(const Tensor<T>&, int);                                                 \
    template FusionContext<T> make_fusion_context(const Tensor<T>&, const Tensor<T>&, int, const Lfe<T>&,    \
                                                  const Lfe<T>&, const Hfi<T>&, double);                     \
    template Tensor<T> fusion_gradient(const Tensor<T>&, const FusionContext<T>&);                           \
    template Tensor<T> fusion_energy(const Tensor<T>&, const FusionContext<T>&);                             \
    template Tensor<T> fusion_stationary_point(const FusionContext<T>&);                                     \
    template UnfoldResult<T> fusion_unfold(const Tensor<T>&, const Tensor<T>&, const FusionModule<T>&);

JSSU_INSTANTIATE_FUSION(float)
JSSU_INSTANTIATE_FUSION(double)

}  // namespace jssu

#include "jssu/sr.hpp"

#include <algorithm>
#include <string>

namespace jssu {

std::vector<int> prime_factors(int s) {
    if (s < 1) throw std::invalid_argument("prime_factors: s must be >= 1");
    std::vector<int> out;
    for (int p = 2; p * p <= s; ++p)
        while (s % p == 0) {
            out.push_back(p);
            s /= p;
        }
    if (s > 1) out.push_back(s);
    return out;
}

template <typename T>
ProxSr<T>::ProxSr(Builder<T> b, int channels, int features, int res_blocks)
    : entry(b.sub("entry"), 3, channels, features) {
    for (int i = 0; i < res_blocks; ++i) blocks.emplace_back(b.sub("block" + std::to_string(i)), features);
    // Zero exit weights make the operator start as the identity.
    exit = Conv2d<T>(b.sub("exit"), 3, features, channels, 1, true);
}

template <typename T>
Tensor<T> ProxSr<T>::operator()(const Tensor<T>& x) const {
    Tensor<T> h = entry(x);
    for (const auto& block : blocks) h = block(h);
    return add(x, exit(h));
}

template <typename T>
SrModule<T>::SrModule(Builder<T> b, const ModelConfig& cfg) : config(cfg) {
    const int c = cfg.msi_bands;
    const std::vector<int> primes = prime_factors(cfg.scale);
    std::vector<int> up_steps;
    if (cfg.sr_steps == UpsampleSteps::Single) {
        if (cfg.scale > 1) up_steps.push_back(cfg.scale);
    } else {
        up_steps.assign(primes.rbegin(), primes.rend());
    }
    for (int k = 0; k < cfg.stages; ++k) {
        Builder<T> sb = b.sub("stage" + std::to_string(k));
        SrStage<T> st;
        st.tau = sb.constant("tau", {1}, static_cast<T>(cfg.tau_init));
        st.down_factors = primes;
        for (std::size_t i = 0; i < primes.size(); ++i) {
            const int p = primes[i];
            st.down.emplace_back(sb.sub("down" + std::to_string(i)), 2 * p + 1, c, c, p);
        }
        if (cfg.sr_upsampler != Upsampler::Adjoint) st.up_factors = up_steps;
        for (std::size_t i = 0; i < st.up_factors.size(); ++i) {
            const int p = st.up_factors[i];
            Builder<T> ub = sb.sub("up" + std::to_string(i));
            if (cfg.sr_upsampler == Upsampler::BackProjection) {
                st.up.emplace_back(ub, 2 * p + 1, c, c, p);
            } else {
                // Transposed 1x1 conv inserts zeros (the decimation adjoint);
                // the following conv plays the low-pass filter.
                st.up.emplace_back(ub.sub("decimate"), 1, c, c, p);
                st.lowpass.emplace_back(ub.sub("lowpass"), 2 * p + 1, c, c, 1);
            }
        }
        if (cfg.sr_upsampler == Upsampler::BackProjection) st.refine = Conv2d<T>(sb.sub("refine"), 3, c, c);
        st.prox = ProxSr<T>(sb.sub("prox"), c, cfg.features, cfg.res_blocks);
        stages.push_back(std::move(st));
    }
}

template <typename T>
Tensor<T> down_sr(const Tensor<T>& u, const SrStage<T>& stage) {
    int s = 1;
    for (int p : stage.down_factors) s *= p;
    if (u.ndim() != 3 || u.dim(0) % s != 0 || u.dim(1) % s != 0)
        throw DimensionError("down_sr: scale " + std::to_string(s) + " does not divide " + shape_str(u.shape()));
    Tensor<T> x = u;
    for (const auto& conv : stage.down) x = conv(x);
    return x;
}

template <typename T>
Tensor<T> down_sr_adjoint(const Tensor<T>& r, const SrStage<T>& stage) {
    Tensor<T> x = r;
    for (std::size_t i = stage.down.size(); i-- > 0;) x = conv_transpose2d(x, stage.down[i].weight, stage.down[i].stride);
    return x;
}

template <typename T>
Tensor<T> up_operator(const Tensor<T>& x, const SrStage<T>& stage, const ModelConfig& config) {
    switch (config.sr_upsampler) {
        case Upsampler::Adjoint:
            return down_sr_adjoint(x, stage);
        case Upsampler::Forward: {
            Tensor<T> y = x;
            for (std::size_t i = 0; i < stage.up.size(); ++i) y = stage.lowpass[i](stage.up[i](y));
            return y;
        }
        case Upsampler::BackProjection:
        default: {
            Tensor<T> y = x;
            for (const auto& step : stage.up) y = step(y);
            return stage.refine(y);
        }
    }
}

template <typename T>
Tensor<T> up_sr(const Tensor<T>& u, const Tensor<T>& f, const SrStage<T>& stage, const ModelConfig& config) {
    const Tensor<T> down = down_sr(u, stage);
    if (down.shape() != f.shape())
        throw DimensionError("up_sr: down_sr(u) " + shape_str(down.shape()) + " vs f " + shape_str(f.shape()));
    return up_operator(sub(down, f), stage, config);
}

template <typename T>
Tensor<T> sr_stage(const Tensor<T>& u, const Tensor<T>& f, const SrStage<T>& stage, const ModelConfig& config) {
    const Tensor<T> step = scale_by(up_sr(u, f, stage, config), stage.tau);
    const Tensor<T> moved = config.sr_residual_sign == ResidualSign::Descent ? sub(u, step) : add(u, step);
    return prox_sr(moved, stage);
}

template <typename T>
UnfoldResult<T> sr_unfold(const Tensor<T>& f, const SrModule<T>& module) {
    if (module.stages.empty()) throw std::invalid_argument("sr_unfold: at least one stage required");
    if (f.ndim() != 3 || f.dim(2) != module.config.msi_bands)
        throw DimensionError("sr_unfold: f must be [h,w,c], got " + shape_str(f.shape()));
    const int s = module.config.scale;
    UnfoldResult<T> result;
    Tensor<T> u = bicubic_resize(f, f.dim(0) * s, f.dim(1) * s);
    for (const auto& stage : module.stages) {
        u = sr_stage(u, f, stage, module.config);
        result.per_stage.push_back(u);
    }
    result.output = u;
    return result;
}

#define JSSU_INSTANTIATE_SR(T)                                                                       \
    template struct ProxSr<T>;                                                                       \
    template struct SrModule<T>;                                                                     \
    template Tensor<T> down_sr(const Tensor<T>&, const SrStage<T>&);                                 \
    template Tensor<T> down_sr_adjoint(const Tensor<T>&, const SrStage<T>&);                         \
    template Tensor<T> up_operator(const Tensor<T>&, const SrStage<T>&, const ModelConfig&);         \
    template Tensor<T> up_sr(const Tensor<T>&, const Tensor<T>&, const SrStage<T>&, const ModelConfig&); \
    template Tensor<T> sr_stage(const Tensor<T>&, const Tensor<T>&, const SrStage<T>&, const ModelConfig&); \
    template UnfoldResult<T> sr_unfold(const Tensor<T>&, const SrModule<T>&);

JSSU_INSTANTIATE_SR(float)
JSSU_INSTANTIATE_SR(double)

}  // namespace jssu

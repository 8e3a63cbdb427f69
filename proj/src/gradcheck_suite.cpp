#include "jssu/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "jssu/fusion.hpp"
#include "jssu/nn.hpp"
#include "jssu/sr.hpp"
#include "jssu/ssr.hpp"

namespace jssu {

namespace {

using D = double;

Tensor<D> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<D> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor<D>(std::move(shape), std::move(v));
}

/// sum(y * w) with a fixed random w, so every output component matters.
Tensor<D> readout(const Tensor<D>& y, const Tensor<D>& w) { return sum(mul(y, w)); }

void randomize(ParamSet<D>& params, Rng& rng, double amplitude = 0.5) {
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    for (auto& e : params.entries())
        for (auto& v : e.tensor.mutable_data()) v = dist(rng);
}

void keep_worst(NamedCheckResult& acc, const GradCheckReport& r) {
    const bool passed = acc.report.passed && r.passed;
    ++acc.instances;
    if (acc.report.failure.empty() &&
        (!r.failure.empty() || acc.instances == 1 || r.max_rel_error > acc.report.max_rel_error))
        acc.report = r;
    acc.report.passed = passed;
}

NamedCheckResult start(const std::string& name) {
    NamedCheckResult r;
    r.name = name;
    r.report.passed = true;
    return r;
}

/// Checks d readout(fn(x)) / dx for one input tensor.
GradCheckReport probe(const std::function<Tensor<D>(const Tensor<D>&)>& fn, const Tensor<D>& x, Rng& rng, double tol) {
    Tensor<D> y;
    {
        NoGradGuard guard;
        y = fn(x);
    }
    const Tensor<D> w = random_tensor(rng, y.shape());
    return gradient_check([&](const Tensor<D>& in) { return readout(fn(in), w); }, x, 1e-5, tol);
}

NamedCheckResult check_elementwise(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("elementwise");
    const Tensor<D> a = random_tensor(rng, {3, 4, 2});
    const Tensor<D> s = random_tensor(rng, {1});
    keep_worst(out, probe([&](const Tensor<D>& x) { return scale(add(mul(x, sub(x, a)), scale_by(x, s)), 0.7); },
                          random_tensor(rng, {3, 4, 2}), rng, tol));
    const Tensor<D> bias = random_tensor(rng, {4});
    keep_worst(out, probe([&](const Tensor<D>& x) { return bias_add(concat_channels<D>({x, a}), bias); },
                          random_tensor(rng, {3, 4, 2}), rng, tol));
    return out;
}

NamedCheckResult check_activations(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("activations");
    keep_worst(out, probe([](const Tensor<D>& x) { return mul(relu(x), sigmoid(x)); }, random_tensor(rng, {4, 4, 3}), rng, tol));
    return out;
}

NamedCheckResult check_conv2d(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("conv2d");
    for (int stride : {1, 2}) {
        const Tensor<D> x = random_tensor(rng, {6, 6, 2});
        const Tensor<D> k = random_tensor(rng, {3, 3, 2, 3});
        const Tensor<D> b = random_tensor(rng, {3});
        keep_worst(out, probe([&](const Tensor<D>& in) { return conv2d(in, k, b, stride, 1); }, x, rng, tol));
        keep_worst(out, probe([&](const Tensor<D>& kk) { return conv2d(x, kk, b, stride, 1); }, k, rng, tol));
        keep_worst(out, probe([&](const Tensor<D>& bb) { return conv2d(x, k, bb, stride, 1); }, b, rng, tol));
    }
    const Tensor<D> k1 = random_tensor(rng, {1, 1, 2, 3});
    keep_worst(out, probe([&](const Tensor<D>& in) { return conv2d(in, k1, Tensor<D>(), 1, 0); },
                          random_tensor(rng, {5, 5, 2}), rng, tol));
    return out;
}

NamedCheckResult check_conv_transpose2d(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("conv_transpose2d");
    for (int stride : {2, 3}) {
        const Tensor<D> x = random_tensor(rng, {3, 3, 3});
        const Tensor<D> k = random_tensor(rng, {2 * stride + 1, 2 * stride + 1, 2, 3});
        keep_worst(out, probe([&](const Tensor<D>& in) { return conv_transpose2d(in, k, stride); }, x, rng, tol));
        keep_worst(out, probe([&](const Tensor<D>& kk) { return conv_transpose2d(x, kk, stride); }, k, rng, tol));
    }
    return out;
}

NamedCheckResult check_bicubic(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("bicubic");
    keep_worst(out, probe([](const Tensor<D>& x) { return bicubic_resize(x, 4, 4); }, random_tensor(rng, {6, 6, 2}), rng, tol));
    keep_worst(out, probe([](const Tensor<D>& x) { return bicubic_resize(x, 9, 7); }, random_tensor(rng, {6, 5, 2}), rng, tol));
    return out;
}

NamedCheckResult check_softmax(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("softmax");
    for (int axis : {0, 2})
        keep_worst(out, probe([axis](const Tensor<D>& x) { return softmax(x, axis); }, random_tensor(rng, {3, 4, 5}, -2, 2),
                              rng, tol));
    return out;
}

NamedCheckResult check_linear(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("linear");
    const Tensor<D> x = random_tensor(rng, {7, 4});
    const Tensor<D> w = random_tensor(rng, {4, 5});
    const Tensor<D> b = random_tensor(rng, {5});
    keep_worst(out, probe([&](const Tensor<D>& in) { return linear(in, w, b); }, x, rng, tol));
    keep_worst(out, probe([&](const Tensor<D>& ww) { return linear(x, ww, b); }, w, rng, tol));
    keep_worst(out, probe([&](const Tensor<D>& bb) { return linear(x, w, bb); }, b, rng, tol));
    return out;
}

ClusterMap random_map(Rng& rng, int h, int w, int clusters) {
    ClusterMap map;
    map.height = h;
    map.width = w;
    map.clusters = clusters;
    std::uniform_int_distribution<int> pick(0, clusters - 1);
    map.index.resize(static_cast<std::size_t>(h) * w);
    for (auto& i : map.index) i = pick(rng);
    for (int m = 0; m < clusters && m < h * w; ++m) map.index[m] = m;  // no empty cluster
    return map;
}

NamedCheckResult check_cluster_routing(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("cluster_routing");
    ParamSet<D> params;
    Builder<D> b(params, rng);
    const ClusterMlps<D> mlps(b.sub("mlps"), 3, 3, 6, 5);
    randomize(params, rng);
    const ClusterMap map = random_map(rng, 4, 4, 3);
    keep_worst(out, probe([&](const Tensor<D>& x) { return mlps(x, map); }, random_tensor(rng, {4, 4, 3}), rng, tol));
    return out;
}

NamedCheckResult check_roll(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("roll");
    keep_worst(out, probe([](const Tensor<D>& x) { return roll(x, 2, -3); }, random_tensor(rng, {5, 6, 2}), rng, tol));
    return out;
}

NamedCheckResult check_patch_image(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("patch_image");
    keep_worst(out, probe([](const Tensor<D>& x) { return patch_image(x, 3); }, random_tensor(rng, {4, 5, 2}), rng, tol));
    return out;
}

NamedCheckResult check_channel_attention(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("channel_attention");
    ParamSet<D> params;
    Builder<D> b(params, rng);
    const Rcab<D> block(b.sub("rcab"), 4, 2);
    randomize(params, rng);
    keep_worst(out, probe([&](const Tensor<D>& x) { return block(x); }, random_tensor(rng, {4, 4, 4}), rng, tol));
    return out;
}

NamedCheckResult check_topk_attention(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("topk_attention");
    const Tensor<D> q = random_tensor(rng, {5, 5, 3});
    const Tensor<D> k = random_tensor(rng, {5, 5, 3});
    const Tensor<D> v = random_tensor(rng, {5, 5, 2});
    keep_worst(out, probe([&](const Tensor<D>& x) { return windowed_topk_attention(x, k, v, 3, 4); }, q, rng, tol));
    keep_worst(out, probe([&](const Tensor<D>& x) { return windowed_topk_attention(q, x, v, 3, 4); }, k, rng, tol));
    keep_worst(out, probe([&](const Tensor<D>& x) { return windowed_topk_attention(q, k, x, 3, 4); }, v, rng, tol));
    return out;
}

NamedCheckResult check_l1_loss(std::uint64_t seed, double tol) {
    Rng rng(seed);
    auto out = start("l1_loss");
    const Tensor<D> t = random_tensor(rng, {4, 4, 3});
    keep_worst(out, gradient_check([&](const Tensor<D>& x) { return mean_abs_diff(x, t); }, random_tensor(rng, {4, 4, 3}),
                                   1e-5, tol));
    keep_worst(out, gradient_check([&](const Tensor<D>& x) { return half_squared_norm(sub(x, t)); },
                                   random_tensor(rng, {4, 4, 3}), 1e-5, tol));
    return out;
}

}  // namespace

NamedCheckResult check_sr_fidelity(std::uint64_t seed, double tol, int instances) {
    auto out = start("sr");
    for (int i = 0; i < instances; ++i) {
        Rng rng(seed + 1000 * static_cast<std::uint64_t>(i));
        ModelConfig cfg;
        cfg.msi_bands = 3;
        cfg.scale = i % 2 == 0 ? 2 : 3;
        cfg.stages = 1;
        cfg.sr_upsampler = Upsampler::Adjoint;
        ParamSet<D> params;
        Builder<D> b(params, rng);
        const SrModule<D> module(b.sub("sr"), cfg);
        randomize(params, rng);
        const SrStage<D>& stage = module.stages[0];
        const int h = 6 / cfg.scale;
        const Tensor<D> f = random_tensor(rng, {h, h, 3}, 0.0, 1.0);
        const Tensor<D> u = random_tensor(rng, {6, 6, 3}, 0.0, 1.0);
        std::vector<double> analytic;
        {
            NoGradGuard guard;
            const Tensor<D> grad = up_sr(u, f, stage, cfg);
            analytic.assign(grad.data().begin(), grad.data().end());
        }
        keep_worst(out, compare_gradient([&](const Tensor<D>& x) { return half_squared_norm(sub(down_sr(x, stage), f)); },
                                         analytic, u, 1e-5, tol));
    }
    return out;
}

NamedCheckResult check_ssr_fidelity(std::uint64_t seed, double tol, int instances) {
    auto out = start("ssr");
    for (int i = 0; i < instances; ++i) {
        Rng rng(seed + 2000 * static_cast<std::uint64_t>(i) + 7);
        ModelConfig cfg;
        cfg.msi_bands = 3;
        cfg.hsi_bands = 8;
        cfg.stages = 1;
        cfg.clusters = 3;
        ParamSet<D> params;
        Builder<D> b(params, rng);
        const SsrModule<D> module(b.sub("ssr"), cfg);
        randomize(params, rng);
        const Tensor<D> f = random_tensor(rng, {6, 6, 3}, 0.0, 1.0);
        const ClusterMap map = compute_cluster_map(f, module);
        const Tensor<D> u = random_tensor(rng, {6, 6, 8}, 0.0, 1.0);
        const SsrStage<D>& stage = module.stages[0];
        keep_worst(out, gradient_check([&](const Tensor<D>& x) { return half_squared_norm(sub(down_ssr(x, map, stage), f)); },
                                       u, 1e-5, tol));
    }
    return out;
}

NamedCheckResult check_fusion_fidelity(std::uint64_t seed, double tol, int instances) {
    auto out = start("fusion");
    for (int i = 0; i < instances; ++i) {
        Rng rng(seed + 3000 * static_cast<std::uint64_t>(i) + 11);
        ModelConfig cfg;
        cfg.msi_bands = 3;
        cfg.hsi_bands = 8;
        cfg.scale = 2;
        cfg.stages = 1;
        ParamSet<D> params;
        Builder<D> b(params, rng);
        const FusionModule<D> module(b.sub("fusion"), cfg);
        randomize(params, rng, 0.3);
        const FusionStage<D>& st = module.stages[0];
        FusionContext<D> ctx;
        {
            NoGradGuard guard;
            const Tensor<D> u_sr = random_tensor(rng, {6, 6, 3}, 0.0, 1.0);
            const Tensor<D> u_ssr_up = bicubic_resize(random_tensor(rng, {3, 3, 8}, 0.0, 1.0), 6, 6);
            ctx = make_fusion_context(u_sr, u_ssr_up, 2, st.lfe_sr, st.lfe_ssr, st.hfi, cfg.fusion_epsilon);
        }
        const Tensor<D> u = random_tensor(rng, {6, 6, 8}, 0.0, 1.0);
        std::vector<double> analytic;
        {
            NoGradGuard guard;
            const Tensor<D> grad = fusion_gradient(u, ctx);
            analytic.assign(grad.data().begin(), grad.data().end());
        }
        // energy is quadratic in u: central differences are exact for any step
        keep_worst(out, compare_gradient([&](const Tensor<D>& x) { return fusion_energy(x, ctx); }, analytic, u, 1e-3, tol));
    }
    return out;
}

const std::vector<NamedCheck>& gradcheck_suite() {
    static const std::vector<NamedCheck> suite = {
        {"elementwise", "add, sub, mul, scale, bias and channel concat", check_elementwise},
        {"activations", "relu and sigmoid", check_activations},
        {"conv2d", "input, kernel and bias gradients, strides 1 and 2", check_conv2d},
        {"conv_transpose2d", "input and kernel gradients, strides 2 and 3", check_conv_transpose2d},
        {"bicubic", "down- and up-sampling", check_bicubic},
        {"softmax", "first and last axis", check_softmax},
        {"linear", "pixel-row affine map", check_linear},
        {"cluster_routing", "split, per-cluster MLP, recon", check_cluster_routing},
        {"roll", "circular shift", check_roll},
        {"patch_image", "3x3 patch gather", check_patch_image},
        {"channel_attention", "RCAB with squeeze-excitation gate", check_channel_attention},
        {"topk_attention", "windowed top-k attention, q, k and v", check_topk_attention},
        {"l1_loss", "mean absolute error and squared norm", check_l1_loss},
        {"sr", "spatial fidelity vs adjoint up_sr", [](std::uint64_t s, double t) { return check_sr_fidelity(s, t); }},
        {"ssr", "spectral fidelity through cluster MLPs", [](std::uint64_t s, double t) { return check_ssr_fidelity(s, t); }},
        {"fusion", "radiometric fidelity vs fusion_gradient",
         [](std::uint64_t s, double t) { return check_fusion_fidelity(s, t); }},
    };
    return suite;
}

}  // namespace jssu

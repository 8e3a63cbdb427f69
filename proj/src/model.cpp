#include "jssu/model.hpp"

#include <sstream>

namespace jssu {

template <typename T>
Pipeline<T>::Pipeline(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(seed);
    Builder<T> root(params, rng);
    sr = SrModule<T>(root.sub("sr"), config);
    ssr = SsrModule<T>(root.sub("ssr"), config);
    fusion = FusionModule<T>(root.sub("fusion"), config);
    if (config.postprocess) post = PostProcessor<T>(root.sub("post"), config.attn, config.hsi_bands);
}

template <typename T>
PipelineOutput<T> Pipeline<T>::forward(const Tensor<T>& f, bool apply_post) const {
    PipelineOutput<T> out;
    out.sr = sr_unfold(f, sr);
    out.ssr = ssr_unfold(f, ssr);
    out.fusion = fusion_unfold(out.sr.output, out.ssr.output, fusion);
    out.output = apply_post && config.postprocess ? postprocess(out.fusion.output, post) : out.fusion.output;
    return out;
}

template <typename T>
std::string Pipeline<T>::signature() const {
    std::ostringstream os;
    os << "upsampler=" << to_string(config.sr_upsampler) << " steps=" << to_string(config.sr_steps)
       << " clusters=" << to_string(config.cluster_mode) << "(M=" << config.effective_clusters() << ")"
       << " K=" << config.stages << " features=" << config.features << " params{sr=" << params.scalar_count("sr/")
       << " ssr=" << params.scalar_count("ssr/") << " fusion=" << params.scalar_count("fusion/")
       << " post=" << params.scalar_count("post/") << " total=" << params.scalar_count() << "}";
    return os.str();
}

template class Pipeline<float>;
template class Pipeline<double>;

}  // namespace jssu

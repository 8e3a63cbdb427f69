#pragma once

#include <cstdint>
#include <string>

#include "jssu/attention.hpp"
#include "jssu/config.hpp"
#include "jssu/fusion.hpp"
#include "jssu/nn.hpp"
#include "jssu/sr.hpp"
#include "jssu/ssr.hpp"

namespace jssu {

template <typename T>
struct PipelineOutput {
    UnfoldResult<T> sr;
    SsrResult<T> ssr;
    UnfoldResult<T> fusion;
    Tensor<T> output;  // fused cube, post-processed when requested
};

/// The full LR-MSI -> HR-HSI network. Parameters live under the prefixes
/// "sr/", "ssr/", "fusion/" and "post/".
template <typename T>
class Pipeline {
public:
    Pipeline(const ModelConfig& config, std::uint64_t seed);
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    PipelineOutput<T> forward(const Tensor<T>& f, bool apply_post) const;

    /// One-line summary of the architecture variant and per-module parameter counts.
    std::string signature() const;

    ModelConfig config;
    ParamSet<T> params;
    SrModule<T> sr;
    SsrModule<T> ssr;
    FusionModule<T> fusion;
    PostProcessor<T> post;
};

extern template class Pipeline<float>;
extern template class Pipeline<double>;

}  // namespace jssu

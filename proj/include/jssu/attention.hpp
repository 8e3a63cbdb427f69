#pragma once

#include <vector>

#include "jssu/config.hpp"
#include "jssu/nn.hpp"

// Nonlocal residual post-processor built from windowed top-k pixel attention.
namespace jssu {

/// One attention head: a P x P embedding conv shared by separate 1x1 query
/// and key projections, a 1x1 value projection and a 1x1 output projection.
template <typename T>
struct HeadAttention {
    AttnConfig config;
    Conv2d<T> embed;
    Conv2d<T> query;
    Conv2d<T> key;
    Conv2d<T> value;
    Conv2d<T> output;

    HeadAttention() = default;
    HeadAttention(Builder<T> b, const AttnConfig& config, int channels);

    Tensor<T> embedding(const Tensor<T>& x) const { return embed(x); }
    Tensor<T> operator()(const Tensor<T>& x) const;
    AttentionSelection selection(const Tensor<T>& x) const;
};

/// n_h heads, concatenated and mixed back to C channels by a 1x1 conv.
template <typename T>
struct Mha {
    std::vector<HeadAttention<T>> heads;
    Conv2d<T> merge;

    Mha() = default;
    Mha(Builder<T> b, const AttnConfig& config, int channels);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct PostProcessor {
    AttnConfig config;
    Mha<T> first;
    Mha<T> second;
    Conv2d<T> head;  // zero-initialized, so the module starts as the identity

    PostProcessor() = default;
    PostProcessor(Builder<T> b, const AttnConfig& config, int channels);
};

/// y1 = mha(u); y2 = unroll(mha(roll(y1, w/2))); u + head(y2).
template <typename T>
Tensor<T> postprocess(const Tensor<T>& u, const PostProcessor<T>& module);

}  // namespace jssu

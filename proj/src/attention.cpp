#include "jssu/attention.hpp"

#include <string>

namespace jssu {

template <typename T>
HeadAttention<T>::HeadAttention(Builder<T> b, const AttnConfig& cfg, int channels)
    : config(cfg),
      embed(b.sub("embed"), cfg.patch, channels, cfg.embed_dim),
      query(b.sub("query"), 1, cfg.embed_dim, cfg.embed_dim),
      key(b.sub("key"), 1, cfg.embed_dim, cfg.embed_dim),
      value(b.sub("value"), 1, channels, channels),
      output(b.sub("output"), 1, channels, channels) {}

template <typename T>
Tensor<T> HeadAttention<T>::operator()(const Tensor<T>& x) const {
    const Tensor<T> e = embed(x);
    return output(windowed_topk_attention(query(e), key(e), value(x), config.window, config.topk_count()));
}

template <typename T>
AttentionSelection HeadAttention<T>::selection(const Tensor<T>& x) const {
    NoGradGuard guard;
    const Tensor<T> e = embed(x);
    return attention_selection(query(e), key(e), config.window, config.topk_count());
}

template <typename T>
Mha<T>::Mha(Builder<T> b, const AttnConfig& cfg, int channels) {
    for (int h = 0; h < cfg.heads; ++h) heads.emplace_back(b.sub("head" + std::to_string(h)), cfg, channels);
    merge = Conv2d<T>(b.sub("merge"), 1, cfg.heads * channels, channels);
}

template <typename T>
Tensor<T> Mha<T>::operator()(const Tensor<T>& x) const {
    std::vector<Tensor<T>> outs;
    outs.reserve(heads.size());
    for (const auto& h : heads) outs.push_back(h(x));
    return merge(outs.size() == 1 ? outs.front() : concat_channels(outs));
}

template <typename T>
PostProcessor<T>::PostProcessor(Builder<T> b, const AttnConfig& cfg, int channels)
    : config(cfg), first(b.sub("mha0"), cfg, channels), second(b.sub("mha1"), cfg, channels) {
    head = Conv2d<T>(b.sub("head"), 3, channels, channels, 1, true);
}

template <typename T>
Tensor<T> postprocess(const Tensor<T>& u, const PostProcessor<T>& module) {
    const int shift = module.config.window / 2;
    const Tensor<T> y1 = module.first(u);
    const Tensor<T> y2 = roll(module.second(roll(y1, shift, shift)), -shift, -shift);
    return add(u, module.head(y2));
}

template struct HeadAttention<float>;
template struct HeadAttention<double>;
template struct Mha<float>;
template struct Mha<double>;
template struct PostProcessor<float>;
template struct PostProcessor<double>;
template Tensor<float> postprocess(const Tensor<float>&, const PostProcessor<float>&);
template Tensor<double> postprocess(const Tensor<double>&, const PostProcessor<double>&);

}  // namespace jssu

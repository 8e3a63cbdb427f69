#pragma once

#include <cstdint>
#include <vector>

#include "jssu/config.hpp"
#include "jssu/nn.hpp"
#include "jssu/sr.hpp"

// Spectral super-resolution: K unfolded stages mapping the LR-MSI f [h, w, c]
// to an LR-HSI estimate [h, w, C] through cluster-routed pixel MLPs.
namespace jssu {

/// Per-pixel cluster routing, fixed for one forward pass.
struct ClusterMap {
    int height = 0;
    int width = 0;
    int clusters = 1;
    std::vector<int> index;             // [h * w], values in [0, clusters)
    std::vector<double> probabilities;  // [h * w * clusters]; empty when not produced by the assigner

    /// Raster-ordered pixel lists per cluster.
    std::vector<std::vector<int>> members() const;
    std::vector<int> sizes() const;
};

/// argmax with lowest-index tie-breaking.
int argmax_lowest(const double* values, int n);

/// Map with every pixel in cluster 0.
ClusterMap single_cluster_map(int height, int width);

struct KMeansResult {
    int clusters = 0;
    int dim = 0;
    std::vector<double> centroids;  // [clusters * dim]
};

/// Lloyd's algorithm with k-means++ seeding. `samples` is row-major [n, dim].
/// Empty clusters are re-seeded from the sample farthest from its centroid.
KMeansResult kmeans_fit(const std::vector<double>& samples, int dim, int clusters, int iters, std::uint64_t seed);

/// Nearest centroid (Euclidean), lowest index on ties.
std::vector<int> kmeans_assign(const KMeansResult& model, const std::vector<double>& samples);

/// Splits [h, w, d] into one [n_m, d] pixel matrix per cluster (raster order
/// within a cluster). Empty clusters yield undefined tensors.
template <typename T>
std::vector<Tensor<T>> cluster_split(const Tensor<T>& x, const ClusterMap& map);

/// Inverse placement of cluster_split's layout back into [h, w, d'].
template <typename T>
Tensor<T> cluster_recon(const std::vector<Tensor<T>>& parts, const ClusterMap& map);

/// One pixel MLP per cluster.
template <typename T>
struct ClusterMlps {
    std::vector<Mlp<T>> mlps;

    ClusterMlps() = default;
    ClusterMlps(Builder<T> b, int clusters, int din, int hidden, int dout);
    Tensor<T> operator()(const Tensor<T>& x, const ClusterMap& map) const;
};

template <typename T>
struct ProxSsr {
    Conv2d<T> entry;
    std::vector<Rcab<T>> blocks;
    Conv2d<T> exit;

    ProxSsr() = default;
    ProxSsr(Builder<T> b, int channels, int features, int res_blocks, int reduction);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct SsrStage {
    Tensor<T> tau;
    ClusterMlps<T> up;    // c -> C
    ClusterMlps<T> down;  // C -> c
    ProxSsr<T> prox;
};

/// Conv stack producing per-pixel cluster logits.
template <typename T>
struct ClusterAssigner {
    Conv2d<T> conv0;
    Conv2d<T> conv1;

    ClusterAssigner() = default;
    ClusterAssigner(Builder<T> b, int channels, int hidden, int clusters)
        : conv0(b.sub("conv0"), 3, channels, hidden), conv1(b.sub("conv1"), 3, hidden, clusters) {}

    Tensor<T> logits(const Tensor<T>& f) const { return conv1(relu(conv0(f))); }
};

template <typename T>
struct SsrModule {
    ModelConfig config;
    ClusterAssigner<T> assigner;  // learned mode
    Tensor<T> centroids;          // k-means mode, [M, c], a non-trainable buffer
    ClusterMlps<T> init_up;
    std::vector<SsrStage<T>> stages;

    SsrModule() = default;
    SsrModule(Builder<T> b, const ModelConfig& config);

    /// Stores fitted centroids into the buffer.
    void set_centroids(const KMeansResult& km);
};

/// Softmax over assigner logits, then argmax per pixel.
template <typename T>
ClusterMap assign_clusters(const Tensor<T>& f, const ClusterAssigner<T>& assigner);

/// Routing for the module's cluster mode.
template <typename T>
ClusterMap compute_cluster_map(const Tensor<T>& f, const SsrModule<T>& module);

template <typename T>
Tensor<T> up_ssr(const Tensor<T>& x, const ClusterMap& map, const SsrStage<T>& stage) {
    return stage.up(x, map);
}

template <typename T>
Tensor<T> down_ssr(const Tensor<T>& x, const ClusterMap& map, const SsrStage<T>& stage) {
    return stage.down(x, map);
}

template <typename T>
Tensor<T> prox_ssr(const Tensor<T>& x, const SsrStage<T>& stage) {
    return stage.prox(x);
}

template <typename T>
struct SsrResult {
    ClusterMap clusters;
    Tensor<T> output;
    std::vector<Tensor<T>> per_stage;
};

/// u0 = init_up(f); u <- prox(u - tau * up(down(u) - f)) for every stage.
template <typename T>
SsrResult<T> ssr_unfold(const Tensor<T>& f, const SsrModule<T>& module);

}  // namespace jssu

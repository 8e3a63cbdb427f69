#include "jssu/ssr.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

namespace jssu {

std::vector<std::vector<int>> ClusterMap::members() const {
    std::vector<std::vector<int>> out(clusters);
    for (std::size_t p = 0; p < index.size(); ++p) out[index[p]].push_back(static_cast<int>(p));
    return out;
}

std::vector<int> ClusterMap::sizes() const {
    std::vector<int> out(clusters, 0);
    for (int m : index) ++out[m];
    return out;
}

int argmax_lowest(const double* values, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

ClusterMap single_cluster_map(int height, int width) {
    ClusterMap map;
    map.height = height;
    map.width = width;
    map.clusters = 1;
    map.index.assign(static_cast<std::size_t>(height) * width, 0);
    return map;
}

namespace {

double squared_distance(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

int nearest(const KMeansResult& km, const double* x, double* best_dist = nullptr) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int m = 0; m < km.clusters; ++m) {
        const double d = squared_distance(x, km.centroids.data() + static_cast<std::size_t>(m) * km.dim, km.dim);
        if (d < bd) {
            bd = d;
            best = m;
        }
    }
    if (best_dist) *best_dist = bd;
    return best;
}

}  // namespace

KMeansResult kmeans_fit(const std::vector<double>& samples, int dim, int clusters, int iters, std::uint64_t seed) {
    if (dim < 1 || samples.size() % dim != 0) throw std::invalid_argument("kmeans_fit: bad sample layout");
    const std::size_t n = samples.size() / dim;
    if (n == 0) throw std::invalid_argument("kmeans_fit: no samples");
    if (clusters < 1 || static_cast<std::size_t>(clusters) > n)
        throw std::invalid_argument("kmeans_fit: need 1 <= M <= number of samples");
    KMeansResult km;
    km.clusters = clusters;
    km.dim = dim;
    km.centroids.assign(static_cast<std::size_t>(clusters) * dim, 0.0);
    const double* x = samples.data();
    Rng rng(seed);

    // k-means++ seeding.
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    std::copy(x + first * dim, x + (first + 1) * dim, km.centroids.begin());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (int m = 1; m < clusters; ++m) {
        const double* prev = km.centroids.data() + static_cast<std::size_t>(m - 1) * dim;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(x + i * dim, prev, dim));
            total += d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
                chosen = i;
            }
        } else {
            chosen = pick(rng);
        }
        std::copy(x + chosen * dim, x + (chosen + 1) * dim, km.centroids.begin() + static_cast<std::ptrdiff_t>(m) * dim);
    }

    std::vector<int> assign(n, 0);
    std::vector<double> dist(n, 0.0);
    for (int it = 0; it < iters; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < n; ++i) {
            const int a = nearest(km, x + i * dim, &dist[i]);
            changed = changed || a != assign[i];
            assign[i] = a;
        }
        std::vector<double> sums(km.centroids.size(), 0.0);
        std::vector<std::size_t> counts(clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (int d = 0; d < dim; ++d) sums[static_cast<std::size_t>(assign[i]) * dim + d] += x[i * dim + d];
        }
        for (int m = 0; m < clusters; ++m) {
            double* c = km.centroids.data() + static_cast<std::size_t>(m) * dim;
            if (counts[m] == 0) {
                const std::size_t far = static_cast<std::size_t>(
                    std::distance(dist.begin(), std::max_element(dist.begin(), dist.end())));
                std::copy(x + far * dim, x + (far + 1) * dim, c);
                dist[far] = 0.0;
                changed = true;
            } else {
                for (int d = 0; d < dim; ++d) c[d] = sums[static_cast<std::size_t>(m) * dim + d] / counts[m];
            }
        }
        if (!changed) break;
    }
    return km;
}

std::vector<int> kmeans_assign(const KMeansResult& km, const std::vector<double>& samples) {
    const std::size_t n = samples.size() / km.dim;
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = nearest(km, samples.data() + i * km.dim);
    return out;
}

template <typename T>
std::vector<Tensor<T>> cluster_split(const Tensor<T>& x, const ClusterMap& map) {
    if (x.ndim() != 3 || x.dim(0) != map.height || x.dim(1) != map.width)
        throw DimensionError("cluster_split: map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                             " does not match " + shape_str(x.shape()));
    const Tensor<T> flat = reshape(x, {map.height * map.width, x.dim(2)});
    std::vector<Tensor<T>> parts;
    for (const auto& rows : map.members()) parts.push_back(rows.empty() ? Tensor<T>() : gather_rows(flat, rows));
    return parts;
}

template <typename T>
Tensor<T> cluster_recon(const std::vector<Tensor<T>>& parts, const ClusterMap& map) {
    if (parts.size() != static_cast<std::size_t>(map.clusters))
        throw DimensionError("cluster_recon: expected " + std::to_string(map.clusters) + " parts");
    const auto members = map.members();
    std::vector<Tensor<T>> used;
    std::vector<std::vector<int>> rows;
    int width = -1;
    for (std::size_t m = 0; m < parts.size(); ++m) {
        const int have = parts[m].defined() ? parts[m].dim(0) : 0;
        if (have != static_cast<int>(members[m].size()))
            throw DimensionError("cluster_recon: cluster " + std::to_string(m) + " has " + std::to_string(have) +
                                 " rows, map assigns " + std::to_string(members[m].size()));
        if (!parts[m].defined()) continue;
        width = parts[m].dim(1);
        used.push_back(parts[m]);
        rows.push_back(members[m]);
    }
    if (used.empty()) throw DimensionError("cluster_recon: map has no pixels");
    return reshape(scatter_rows(used, rows, map.height * map.width), {map.height, map.width, width});
}

template <typename T>
ClusterMlps<T>::ClusterMlps(Builder<T> b, int clusters, int din, int hidden, int dout) {
    for (int m = 0; m < clusters; ++m) mlps.emplace_back(b.sub("cluster" + std::to_string(m)), din, hidden, dout);
}

template <typename T>
Tensor<T> ClusterMlps<T>::operator()(const Tensor<T>& x, const ClusterMap& map) const {
    if (static_cast<int>(mlps.size()) != map.clusters)
        throw DimensionError("cluster MLPs: " + std::to_string(mlps.size()) + " weight sets for " +
                             std::to_string(map.clusters) + " clusters");
    std::vector<Tensor<T>> parts = cluster_split(x, map);
    for (std::size_t m = 0; m < parts.size(); ++m)
        if (parts[m].defined()) parts[m] = mlps[m](parts[m]);
    return cluster_recon(parts, map);
}

template <typename T>
ProxSsr<T>::ProxSsr(Builder<T> b, int channels, int features, int res_blocks, int reduction)
    : entry(b.sub("entry"), 3, channels, features) {
    for (int i = 0; i < res_blocks; ++i) blocks.emplace_back(b.sub("rcab" + std::to_string(i)), features, reduction);
    exit = Conv2d<T>(b.sub("exit"), 3, features, channels, 1, true);
}

template <typename T>
Tensor<T> ProxSsr<T>::operator()(const Tensor<T>& x) const {
    Tensor<T> h = entry(x);
    for (const auto& block : blocks) h = block(h);
    return add(x, exit(h));
}

template <typename T>
SsrModule<T>::SsrModule(Builder<T> b, const ModelConfig& cfg) : config(cfg) {
    const int c = cfg.msi_bands;
    const int C = cfg.hsi_bands;
    const int M = cfg.effective_clusters();
    const int hidden = cfg.effective_mlp_hidden();
    if (cfg.cluster_mode == ClusterMode::Learned)
        assigner = ClusterAssigner<T>(b.sub("assigner"), c, cfg.assigner_hidden, M);
    if (cfg.cluster_mode == ClusterMode::KMeans) centroids = b.buffer("kmeans_centroids", Tensor<T>(Shape{M, c}));
    init_up = ClusterMlps<T>(b.sub("init_up"), M, c, hidden, C);
    for (int k = 0; k < cfg.stages; ++k) {
        Builder<T> sb = b.sub("stage" + std::to_string(k));
        SsrStage<T> st;
        st.tau = sb.constant("tau", {1}, static_cast<T>(cfg.tau_init));
        st.up = ClusterMlps<T>(sb.sub("up"), M, c, hidden, C);
        st.down = ClusterMlps<T>(sb.sub("down"), M, C, hidden, c);
        st.prox = ProxSsr<T>(sb.sub("prox"), C, cfg.features, cfg.res_blocks, cfg.rcab_reduction);
        stages.push_back(std::move(st));
    }
}

template <typename T>
void SsrModule<T>::set_centroids(const KMeansResult& km) {
    if (!centroids.defined() || km.clusters != centroids.dim(0) || km.dim != centroids.dim(1))
        throw DimensionError("set_centroids: centroid table does not match the module");
    auto dst = centroids.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(km.centroids[i]);
}

template <typename T>
ClusterMap assign_clusters(const Tensor<T>& f, const ClusterAssigner<T>& assigner) {
    const Tensor<T> probs = softmax(assigner.logits(f), 2);
    ClusterMap map;
    map.height = f.dim(0);
    map.width = f.dim(1);
    map.clusters = probs.dim(2);
    map.probabilities.assign(probs.data().begin(), probs.data().end());
    map.index.resize(static_cast<std::size_t>(map.height) * map.width);
    for (std::size_t p = 0; p < map.index.size(); ++p)
        map.index[p] = argmax_lowest(map.probabilities.data() + p * map.clusters, map.clusters);
    return map;
}

template <typename T>
ClusterMap compute_cluster_map(const Tensor<T>& f, const SsrModule<T>& module) {
    switch (module.config.cluster_mode) {
        case ClusterMode::Learned: {
            // The hard argmax passes no gradient back to the assigner.
            NoGradGuard guard;
            return assign_clusters(f, module.assigner);
        }
        case ClusterMode::KMeans: {
            KMeansResult km;
            km.clusters = module.centroids.dim(0);
            km.dim = module.centroids.dim(1);
            km.centroids.assign(module.centroids.data().begin(), module.centroids.data().end());
            ClusterMap map;
            map.height = f.dim(0);
            map.width = f.dim(1);
            map.clusters = km.clusters;
            map.index = kmeans_assign(km, std::vector<double>(f.data().begin(), f.data().end()));
            return map;
        }
        case ClusterMode::None:
        default:
            return single_cluster_map(f.dim(0), f.dim(1));
    }
}

template <typename T>
SsrResult<T> ssr_unfold(const Tensor<T>& f, const SsrModule<T>& module) {
    if (module.stages.empty()) throw std::invalid_argument("ssr_unfold: at least one stage required");
    if (f.ndim() != 3 || f.dim(2) != module.config.msi_bands)
        throw DimensionError("ssr_unfold: f must be [h,w,c], got " + shape_str(f.shape()));
    SsrResult<T> result;
    result.clusters = compute_cluster_map(f, module);
    Tensor<T> u = module.init_up(f, result.clusters);
    for (const auto& stage : module.stages) {
        const Tensor<T> residual = sub(down_ssr(u, result.clusters, stage), f);
        const Tensor<T> direction = up_ssr(residual, result.clusters, stage);
        u = prox_ssr(sub(u, scale_by(direction, stage.tau)), stage);
        result.per_stage.push_back(u);
    }
    result.output = u;
    return result;
}

#define JSSU_INSTANTIATE_SSR(T)                                                                      \
    template std::vector<Tensor<T>> cluster_split(const Tensor<T>&, const ClusterMap&);              \
    template Tensor<T> cluster_recon(const std::vector<Tensor<T>>&, const ClusterMap&);              \
    template struct ClusterMlps<T>;                                                                  \
    template struct ProxSsr<T>;                                                                      \
    template struct SsrModule<T>;                                                                    \
    template ClusterMap assign_clusters(const Tensor<T>&, const ClusterAssigner<T>&);                \
    template ClusterMap compute_cluster_map(const Tensor<T>&, const SsrModule<T>&);                  \
    template SsrResult<T> ssr_unfold(const Tensor<T>&, const SsrModule<T>&);

JSSU_INSTANTIATE_SSR(float)
JSSU_INSTANTIATE_SSR(double)

}  // namespace jssu

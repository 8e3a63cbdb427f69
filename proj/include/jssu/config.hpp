#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace jssu {

/// Invalid configuration or input data (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Upsampler {
    BackProjection,  // Up(down_sr(u) - f) with a learned transposed-conv chain plus refinement
    Forward,         // learned zero-insertion transposed conv followed by a low-pass conv
    Adjoint,         // exact adjoint of the stage's down_sr chain (no extra weights)
};

enum class UpsampleSteps { Progressive, Single };

enum class ResidualSign {
    Descent,         // u - tau * Up(D(u) - f)
    BackProjection,  // u + tau * Up(D(u) - f)
};

enum class ClusterMode { Learned, KMeans, None };

struct AttnConfig {
    int window = 11;
    int patch = 11;
    int embed_dim = 8;
    int heads = 4;
    double topk_ratio = 0.1;

    /// ceil(topk_ratio * window^2), at least 1.
    int topk_count() const;
};

struct ModelConfig {
    int msi_bands = 3;   // c
    int hsi_bands = 8;   // C
    int scale = 2;       // s
    int stages = 2;      // K
    int features = 16;
    int res_blocks = 3;
    int clusters = 3;    // M
    ClusterMode cluster_mode = ClusterMode::Learned;
    int mlp_hidden = 0;  // 0 selects 2 * max(c, C)
    int rcab_reduction = 4;
    int assigner_hidden = 16;
    Upsampler sr_upsampler = Upsampler::BackProjection;
    UpsampleSteps sr_steps = UpsampleSteps::Progressive;
    ResidualSign sr_residual_sign = ResidualSign::Descent;
    double tau_init = 0.1;
    double fusion_epsilon = 1e-6;
    bool postprocess = true;
    AttnConfig attn;

    int effective_clusters() const { return cluster_mode == ClusterMode::None ? 1 : clusters; }
    int effective_mlp_hidden() const;
    void validate() const;
};

struct TrainConfig {
    int phase1_epochs = 200;
    int phase2_epochs = 10;
    double learning_rate = 1e-4;
    std::array<double, 3> alpha_sr{2.0, 0.5, 0.0};
    std::array<double, 3> alpha_ssr{1.0, 1.0, 0.5};
    std::array<double, 3> alpha_fus{0.5, 1.0, 1.0};
    std::array<int, 2> change_points{300, 600};
    double kmeans_fraction = 0.25;
    int kmeans_iters = 25;

    void validate() const;
};

struct DataConfig {
    int height = 32;
    int width = 32;
    int samples = 10;
    std::array<int, 3> split{8, 1, 1};
    double noise_sigma = 0.0;
    int endmembers = 4;
    int blobs = 8;

    void validate(const ModelConfig& model) const;
};

struct PreviewConfig {
    std::array<int, 3> bands{-1, -1, -1};  // negative selects (C-1, C/2, 0)
    std::array<int, 2> probe{0, 0};
};

struct PathsConfig {
    std::string dataset = "data";
    std::string checkpoints = "checkpoints";
    std::string reports = "reports";
};

struct RunConfig {
    std::uint64_t seed = 1;
    ModelConfig model;
    TrainConfig training;
    DataConfig data;
    PreviewConfig preview;
    PathsConfig paths;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string to_string(Upsampler v);
std::string to_string(UpsampleSteps v);
std::string to_string(ClusterMode v);
std::string to_string(ResidualSign v);

}  // namespace jssu

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jssu/config.hpp"
#include "jssu/data.hpp"
#include "jssu/metrics.hpp"
#include "jssu/model.hpp"

namespace jssu {

/// Training diverged: a loss or gradient became NaN or infinite.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Alphas {
    double sr = 0.0;
    double ssr = 0.0;
    double fus = 0.0;
};

/// Piecewise-constant weights on [0, cp0), [cp0, cp1), [cp1, inf).
Alphas alpha_at_epoch(const TrainConfig& config, int epoch);

/// l1(fus_K, G) + a_sr/K sum l1(sr_k, F) + a_ssr/K sum l1(ssr_k, g) + a_fus/K sum l1(fus_k, G).
template <typename T>
Tensor<T> loss_phase1(const std::vector<Tensor<T>>& sr, const std::vector<Tensor<T>>& ssr,
                      const std::vector<Tensor<T>>& fus, const Tensor<T>& F, const Tensor<T>& g, const Tensor<T>& G,
                      const Alphas& alphas);

/// Adam with bias correction; moments keyed by parameter path.
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    /// Updates every parameter that currently tracks gradients. Parameters with
    /// no gradient buffer are treated as having a zero gradient. Throws
    /// NonFiniteError naming the parameter if a gradient is not finite.
    void step(ParamSet<float>& params, double lr);

    std::int64_t steps() const { return step_; }
    void set_steps(std::int64_t s) { step_ = s; }
    std::map<std::string, std::vector<float>>& first_moments() { return m_; }
    std::map<std::string, std::vector<float>>& second_moments() { return v_; }
    const std::map<std::string, std::vector<float>>& first_moments() const { return m_; }
    const std::map<std::string, std::vector<float>>& second_moments() const { return v_; }

private:
    std::int64_t step_ = 0;
    std::map<std::string, std::vector<float>> m_;
    std::map<std::string, std::vector<float>> v_;
};

struct TrainingMeta {
    int phase = 1;
    int epoch = 0;  // completed epochs
    double best_val_psnr = -1.0;
    int best_epoch = 0;
};

/// Complete resumable state: model, optimizer, shuffling RNG and counters.
struct TrainingState {
    RunConfig config;
    std::unique_ptr<Pipeline<float>> model;
    Adam adam;
    Rng rng;
    TrainingMeta meta;

    explicit TrainingState(const RunConfig& config);
};

std::string serialize_checkpoint(const TrainingState& state);
void deserialize_checkpoint(const std::string& bytes, TrainingState& state);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
/// Rebuilds the state (config from the file) and restores every record.
std::unique_ptr<TrainingState> load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_psnr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::string best_checkpoint;  // serialized state with the highest validation PSNR
    bool aborted = false;
    std::string abort_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Fits k-means centroids on a seeded sample of training LR-MSI pixels when
/// the model uses k-means routing; no-op otherwise.
void prepare_clusters(TrainingState& state, const std::vector<LoadedSample>& train);

/// Phase 1 from the state's current epoch up to training.phase1_epochs.
TrainResult train_phase1(TrainingState& state, const std::vector<LoadedSample>& train,
                         const std::vector<LoadedSample>& val, const EpochCallback& on_epoch = {});

/// Phase 2: only "post/" parameters train, on l1(postprocess(u_Fus), G).
TrainResult train_phase2(TrainingState& state, const std::vector<LoadedSample>& train,
                         const std::vector<LoadedSample>& val, const EpochCallback& on_epoch = {});

/// Network output for f (no gradient recording).
ImageCube infer(const Pipeline<float>& model, const ImageCube& f, bool apply_post);

std::vector<MetricsRow> evaluate_model(const Pipeline<float>& model, const std::vector<LoadedSample>& samples,
                                       bool apply_post);

/// Bicubic spatial upsampling followed by an affine least-squares c -> C spectral map fit on train pixels.
struct SpectralRegressionBaseline {
    int msi_bands = 0;
    int hsi_bands = 0;
    int scale = 1;
    std::vector<double> coefficients;  // [(c + 1) * C], last row is the bias

    static SpectralRegressionBaseline fit(const std::vector<LoadedSample>& train, int scale);
    ImageCube predict(const ImageCube& f) const;
};

std::vector<MetricsRow> evaluate_baseline(const SpectralRegressionBaseline& baseline,
                                          const std::vector<LoadedSample>& samples);

/// Model signature plus the loss schedule.
std::string run_signature(const Pipeline<float>& model, const TrainConfig& training);

/// Checksum over every parameter value whose path starts with one of the prefixes.
std::uint64_t parameter_digest(const ParamSet<float>& params, const std::vector<std::string>& prefixes);

}  // namespace jssu

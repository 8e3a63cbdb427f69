#include "jssu/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

namespace jssu {

namespace fs = std::filesystem;

Alphas alpha_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw std::invalid_argument("alpha_at_epoch: epoch must be >= 0");
    const int i = epoch < cfg.change_points[0] ? 0 : epoch < cfg.change_points[1] ? 1 : 2;
    return {cfg.alpha_sr[i], cfg.alpha_ssr[i], cfg.alpha_fus[i]};
}

template <typename T>
Tensor<T> loss_phase1(const std::vector<Tensor<T>>& sr, const std::vector<Tensor<T>>& ssr,
                      const std::vector<Tensor<T>>& fus, const Tensor<T>& F, const Tensor<T>& g, const Tensor<T>& G,
                      const Alphas& alphas) {
    const std::size_t K = fus.size();
    if (K == 0 || sr.size() != K || ssr.size() != K)
        throw std::invalid_argument("loss_phase1: per-stage lists must share a non-zero length (got " +
                                    std::to_string(sr.size()) + ", " + std::to_string(ssr.size()) + ", " +
                                    std::to_string(K) + ")");
    Tensor<T> loss = mean_abs_diff(fus.back(), G);
    auto term = [&](const std::vector<Tensor<T>>& stages, const Tensor<T>& ref, double alpha) {
        if (alpha == 0.0) return;
        Tensor<T> acc = mean_abs_diff(stages[0], ref);
        for (std::size_t k = 1; k < K; ++k) acc = add(acc, mean_abs_diff(stages[k], ref));
        loss = add(loss, scale(acc, static_cast<T>(alpha / K)));
    };
    term(sr, F, alphas.sr);
    term(ssr, g, alphas.ssr);
    term(fus, G, alphas.fus);
    return loss;
}

template Tensor<float> loss_phase1(const std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&,
                                   const std::vector<Tensor<float>>&, const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, const Alphas&);
template Tensor<double> loss_phase1(const std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&,
                                    const std::vector<Tensor<double>>&, const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, const Alphas&);

void Adam::step(ParamSet<float>& params, double lr) {
    for (const auto& e : params.entries()) {
        if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
        for (float gv : e.tensor.grad())
            if (!std::isfinite(gv)) throw NonFiniteError("non-finite gradient in " + e.path);
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& e : params.entries()) {
        if (!e.tensor.requires_grad()) continue;
        const std::size_t n = e.tensor.size();
        auto& m = m_[e.path];
        auto& v = v_[e.path];
        if (m.size() != n) m.assign(n, 0.0f);
        if (v.size() != n) v.assign(n, 0.0f);
        const bool has = e.tensor.has_grad();
        auto grad = has ? e.tensor.grad() : std::span<const float>();
        auto p = e.tensor.mutable_data();
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = has ? grad[i] : 0.0;
            const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
            p[i] = static_cast<float>(p[i] - update);
        }
    }
}

namespace {

constexpr char kCheckpointMagic[4] = {'J', 'S', 'S', 'U'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t shuffle_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

void put_record(std::string& out, const std::string& path, const Shape& shape, std::span<const float> values) {
    put_string(out, path);
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
        pos_ += 8;
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string string() { return str(u32()); }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated payload");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct Record {
    Shape shape;
    std::vector<float> values;
};

}  // namespace

TrainingState::TrainingState(const RunConfig& cfg)
    : config(cfg), model(std::make_unique<Pipeline<float>>(cfg.model, cfg.seed)), rng(shuffle_seed(cfg.seed)) {}

std::string serialize_checkpoint(const TrainingState& state) {
    nlohmann::json meta;
    meta["config"] = to_json(state.config);
    meta["phase"] = state.meta.phase;
    meta["epoch"] = state.meta.epoch;
    meta["best_val_psnr"] = state.meta.best_val_psnr;
    meta["best_epoch"] = state.meta.best_epoch;
    meta["adam_steps"] = state.adam.steps();
    const std::string blob = meta.dump();

    std::string out(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, blob.size());
    out += blob;

    const auto& entries = state.model->params.entries();
    std::size_t count = entries.size() + state.adam.first_moments().size() + state.adam.second_moments().size();
    put_u32(out, static_cast<std::uint32_t>(count));
    for (const auto& e : entries) put_record(out, e.path, e.tensor.shape(), e.tensor.data());
    for (const auto& [path, m] : state.adam.first_moments()) put_record(out, "optim/m/" + path, {static_cast<int>(m.size())}, m);
    for (const auto& [path, v] : state.adam.second_moments()) put_record(out, "optim/v/" + path, {static_cast<int>(v.size())}, v);

    std::ostringstream rng_text;
    rng_text << state.rng;
    put_string(out, rng_text.str());
    return out;
}

namespace {

nlohmann::json read_header(Reader& in) {
    if (in.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError("checkpoint: bad magic");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint64_t n = in.u64();
    try {
        return nlohmann::json::parse(in.str(n));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint: corrupt metadata: ") + e.what());
    }
}

}  // namespace

void deserialize_checkpoint(const std::string& bytes, TrainingState& state) {
    Reader in(bytes);
    const nlohmann::json meta = read_header(in);
    std::map<std::string, Record> records;
    const std::uint32_t count = in.u32();
    for (std::uint32_t r = 0; r < count; ++r) {
        std::string path = in.string();
        Record rec;
        const std::uint32_t nd = in.u32();
        for (std::uint32_t d = 0; d < nd; ++d) rec.shape.push_back(static_cast<int>(in.u32()));
        rec.values.resize(numel(rec.shape));
        for (auto& v : rec.values) v = in.f32();
        records.emplace(std::move(path), std::move(rec));
    }
    const std::string rng_text = in.string();
    if (!in.done()) throw FormatError("checkpoint: trailing bytes");

    for (auto& e : state.model->params.entries()) {
        const auto it = records.find(e.path);
        if (it == records.end()) throw FormatError("checkpoint: missing parameter " + e.path);
        if (it->second.shape != e.tensor.shape())
            throw FormatError("checkpoint: " + e.path + " has shape " + shape_str(it->second.shape) + ", model expects " +
                              shape_str(e.tensor.shape()));
        std::copy(it->second.values.begin(), it->second.values.end(), e.tensor.mutable_data().begin());
    }
    state.adam = Adam();
    for (auto& [path, rec] : records) {
        if (path.rfind("optim/m/", 0) == 0) state.adam.first_moments()[path.substr(8)] = rec.values;
        if (path.rfind("optim/v/", 0) == 0) state.adam.second_moments()[path.substr(8)] = rec.values;
    }
    state.adam.set_steps(meta.at("adam_steps").get<std::int64_t>());
    state.meta.phase = meta.at("phase").get<int>();
    state.meta.epoch = meta.at("epoch").get<int>();
    state.meta.best_val_psnr = meta.at("best_val_psnr").get<double>();
    state.meta.best_epoch = meta.at("best_epoch").get<int>();
    std::istringstream rng_in(rng_text);
    rng_in >> state.rng;
    if (!rng_in) throw FormatError("checkpoint: corrupt RNG state");
}

void save_checkpoint(const TrainingState& state, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const std::string bytes = serialize_checkpoint(state);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::unique_ptr<TrainingState> load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    Reader reader(bytes);
    const nlohmann::json meta = read_header(reader);
    auto state = std::make_unique<TrainingState>(run_config_from_json(meta.at("config")));
    deserialize_checkpoint(bytes, *state);
    return state;
}

void prepare_clusters(TrainingState& state, const std::vector<LoadedSample>& train) {
    const ModelConfig& mc = state.config.model;
    if (mc.cluster_mode != ClusterMode::KMeans) return;
    if (train.empty()) throw ConfigError("k-means clustering needs at least one training sample");
    const int c = mc.msi_bands;
    std::vector<double> pixels;
    for (const auto& s : train) pixels.insert(pixels.end(), s.cubes.f.data.begin(), s.cubes.f.data.end());
    const std::size_t n = pixels.size() / c;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(state.config.seed + 17);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t keep = std::max<std::size_t>(
        mc.clusters, static_cast<std::size_t>(std::ceil(state.config.training.kmeans_fraction * n)));
    std::vector<double> sample;
    sample.reserve(std::min(keep, n) * c);
    for (std::size_t i = 0; i < std::min(keep, n); ++i)
        sample.insert(sample.end(), pixels.begin() + order[i] * c, pixels.begin() + (order[i] + 1) * c);
    const KMeansResult km = kmeans_fit(sample, c, mc.clusters, state.config.training.kmeans_iters, state.config.seed);
    state.model->ssr.set_centroids(km);
}

ImageCube infer(const Pipeline<float>& model, const ImageCube& f, bool apply_post) {
    NoGradGuard guard;
    ImageCube out = ImageCube::from_tensor(model.forward(f.to_tensor<float>(), apply_post).output);
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

std::vector<MetricsRow> evaluate_model(const Pipeline<float>& model, const std::vector<LoadedSample>& samples,
                                       bool apply_post) {
    std::vector<MetricsRow> rows;
    for (const auto& s : samples)
        rows.push_back(evaluate_pair(s.id, infer(model, s.cubes.f, apply_post), s.cubes.G, model.config.scale));
    return rows;
}

namespace {

double mean_psnr(const Pipeline<float>& model, const std::vector<LoadedSample>& samples, bool apply_post) {
    if (samples.empty()) return 0.0;
    return mean_row(evaluate_model(model, samples, apply_post)).psnr;
}

bool finite(float v) { return std::isfinite(v); }

template <typename StepFn>
TrainResult run_epochs(TrainingState& state, int total_epochs, const std::vector<LoadedSample>& train,
                       const std::vector<LoadedSample>& val, bool apply_post, const EpochCallback& on_epoch,
                       StepFn&& step) {
    TrainResult result;
    if (state.meta.best_val_psnr < 0.0 && state.meta.epoch == 0) {
        state.meta.best_val_psnr = mean_psnr(*state.model, val, apply_post);
        state.meta.best_epoch = 0;
    }
    result.best_checkpoint = serialize_checkpoint(state);
    std::string last_good = result.best_checkpoint;
    std::vector<std::size_t> order(train.size());
    while (state.meta.epoch < total_epochs) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), state.rng);
        double total = 0.0;
        try {
            for (std::size_t idx : order) total += step(train[idx]);
        } catch (const NonFiniteError& e) {
            deserialize_checkpoint(last_good, state);
            result.aborted = true;
            result.abort_reason = std::string(e.what()) + " in epoch " + std::to_string(state.meta.epoch + 1);
            return result;
        }
        ++state.meta.epoch;
        EpochRecord rec;
        rec.epoch = state.meta.epoch;
        rec.train_loss = train.empty() ? 0.0 : total / train.size();
        rec.val_psnr = mean_psnr(*state.model, val, apply_post);
        if (rec.val_psnr > state.meta.best_val_psnr) {
            state.meta.best_val_psnr = rec.val_psnr;
            state.meta.best_epoch = rec.epoch;
            result.best_checkpoint = serialize_checkpoint(state);
        }
        last_good = serialize_checkpoint(state);
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

}  // namespace

TrainResult train_phase1(TrainingState& state, const std::vector<LoadedSample>& train,
                         const std::vector<LoadedSample>& val, const EpochCallback& on_epoch) {
    if (state.meta.phase != 1) throw ConfigError("train_phase1: state is in phase " + std::to_string(state.meta.phase));
    Pipeline<float>& model = *state.model;
    const TrainConfig& tc = state.config.training;
    auto step = [&](const LoadedSample& s) {
        const Alphas alphas = alpha_at_epoch(tc, state.meta.epoch);
        model.params.zero_grad();
        const PipelineOutput<float> out = model.forward(s.cubes.f.to_tensor<float>(), false);
        const Tensor<float> loss = loss_phase1(out.sr.per_stage, out.ssr.per_stage, out.fusion.per_stage,
                                               s.cubes.F.to_tensor<float>(), s.cubes.g.to_tensor<float>(),
                                               s.cubes.G.to_tensor<float>(), alphas);
        const float value = loss.item();
        if (!finite(value)) throw NonFiniteError("non-finite loss on " + s.id);
        loss.backward();
        state.adam.step(model.params, tc.learning_rate);
        return static_cast<double>(value);
    };
    return run_epochs(state, tc.phase1_epochs, train, val, false, on_epoch, step);
}

TrainResult train_phase2(TrainingState& state, const std::vector<LoadedSample>& train,
                         const std::vector<LoadedSample>& val, const EpochCallback& on_epoch) {
    Pipeline<float>& model = *state.model;
    if (!model.config.postprocess) throw ConfigError("train_phase2: the model has no post-processing module");
    if (state.meta.phase == 1) {
        state.meta.phase = 2;
        state.meta.epoch = 0;
        state.meta.best_val_psnr = -1.0;
        state.meta.best_epoch = 0;
        state.adam = Adam();
    }
    for (const char* prefix : {"sr/", "ssr/", "fusion/"}) model.params.set_trainable(prefix, false);
    const TrainConfig& tc = state.config.training;
    auto step = [&](const LoadedSample& s) {
        model.params.zero_grad();
        Tensor<float> fused;
        {
            NoGradGuard guard;
            fused = model.forward(s.cubes.f.to_tensor<float>(), false).output;
        }
        const Tensor<float> loss = mean_abs_diff(postprocess(fused, model.post), s.cubes.G.to_tensor<float>());
        const float value = loss.item();
        if (!finite(value)) throw NonFiniteError("non-finite loss on " + s.id);
        loss.backward();
        state.adam.step(model.params, tc.learning_rate);
        return static_cast<double>(value);
    };
    TrainResult result = run_epochs(state, tc.phase2_epochs, train, val, true, on_epoch, step);
    for (const char* prefix : {"sr/", "ssr/", "fusion/"}) model.params.set_trainable(prefix, true);
    return result;
}

SpectralRegressionBaseline SpectralRegressionBaseline::fit(const std::vector<LoadedSample>& train, int scale) {
    if (train.empty()) throw ConfigError("baseline: no training samples");
    SpectralRegressionBaseline b;
    b.msi_bands = train.front().cubes.F.channels;
    b.hsi_bands = train.front().cubes.G.channels;
    b.scale = scale;
    const int c = b.msi_bands, C = b.hsi_bands;
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(c + 1, c + 1);
    Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(c + 1, C);
    Eigen::VectorXd x(c + 1);
    Eigen::VectorXd y(C);
    for (const auto& s : train) {
        const std::size_t pixels = static_cast<std::size_t>(s.cubes.F.height) * s.cubes.F.width;
        for (std::size_t p = 0; p < pixels; ++p) {
            for (int i = 0; i < c; ++i) x[i] = s.cubes.F.data[p * c + i];
            x[c] = 1.0;
            for (int j = 0; j < C; ++j) y[j] = s.cubes.G.data[p * C + j];
            xtx.noalias() += x * x.transpose();
            xty.noalias() += x * y.transpose();
        }
    }
    const Eigen::MatrixXd beta = xtx.ldlt().solve(xty);
    b.coefficients.resize(static_cast<std::size_t>(c + 1) * C);
    for (int i = 0; i <= c; ++i)
        for (int j = 0; j < C; ++j) b.coefficients[static_cast<std::size_t>(i) * C + j] = beta(i, j);
    return b;
}

ImageCube SpectralRegressionBaseline::predict(const ImageCube& f) const {
    if (f.channels != msi_bands) throw DimensionError("baseline: expected " + std::to_string(msi_bands) + " input bands");
    ImageCube up;
    {
        NoGradGuard guard;
        up = ImageCube::from_tensor(bicubic_resize(f.to_tensor<double>(), f.height * scale, f.width * scale));
    }
    const int c = msi_bands, C = hsi_bands;
    ImageCube out(up.height, up.width, C);
    const std::size_t pixels = static_cast<std::size_t>(up.height) * up.width;
    for (std::size_t p = 0; p < pixels; ++p)
        for (int j = 0; j < C; ++j) {
            double acc = coefficients[static_cast<std::size_t>(c) * C + j];
            for (int i = 0; i < c; ++i) acc += coefficients[static_cast<std::size_t>(i) * C + j] * up.data[p * c + i];
            out.data[p * C + j] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    return out;
}

std::vector<MetricsRow> evaluate_baseline(const SpectralRegressionBaseline& baseline,
                                          const std::vector<LoadedSample>& samples) {
    std::vector<MetricsRow> rows;
    for (const auto& s : samples)
        rows.push_back(evaluate_pair(s.id, baseline.predict(s.cubes.f), s.cubes.G, baseline.scale));
    return rows;
}

namespace {

std::string triple(const std::array<double, 3>& a) {
    std::ostringstream os;
    os << "(" << a[0] << "," << a[1] << "," << a[2] << ")";
    return os.str();
}

}  // namespace

std::string run_signature(const Pipeline<float>& model, const TrainConfig& training) {
    return model.signature() + " schedule{sr=" + triple(training.alpha_sr) + " ssr=" + triple(training.alpha_ssr) +
           " fus=" + triple(training.alpha_fus) + "}";
}

std::uint64_t parameter_digest(const ParamSet<float>& params, const std::vector<std::string>& prefixes) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& e : params.entries()) {
        const bool match = std::any_of(prefixes.begin(), prefixes.end(),
                                       [&](const std::string& pre) { return e.path.rfind(pre, 0) == 0; });
        if (!match) continue;
        mix(e.path.data(), e.path.size());
        mix(e.tensor.data().data(), e.tensor.size() * sizeof(float));
    }
    return h;
}

}  // namespace jssu

#include "jssu/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace jssu {

using nlohmann::json;

int AttnConfig::topk_count() const {
    const double raw = topk_ratio * window * window;
    // Guard against 0.1 * 121 = 12.100000000000001 style representation noise
    // pushing exact products over an integer.
    const double rounded = std::round(raw);
    const int k = std::abs(raw - rounded) < 1e-9 ? static_cast<int>(rounded) : static_cast<int>(std::ceil(raw));
    return std::max(1, k);
}

int ModelConfig::effective_mlp_hidden() const {
    return mlp_hidden > 0 ? mlp_hidden : 2 * std::max(msi_bands, hsi_bands);
}

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(msi_bands >= 1, "model: msi_bands must be >= 1");
    require(hsi_bands >= 1, "model: hsi_bands must be >= 1");
    require(scale >= 1, "model: scale must be >= 1");
    require(stages >= 1, "model: stages must be >= 1");
    require(features >= 1, "model: features must be >= 1");
    require(res_blocks >= 0, "model: res_blocks must be >= 0");
    require(clusters >= 1, "model: clusters must be >= 1");
    require(rcab_reduction >= 1, "model: rcab_reduction must be >= 1");
    require(assigner_hidden >= 1, "model: assigner_hidden must be >= 1");
    require(tau_init >= 0.0, "model: tau_init must be non-negative");
    require(fusion_epsilon > 0.0, "model: fusion_epsilon must be positive");
    require(attn.window >= 1 && attn.window % 2 == 1, "model.attn: window must be odd");
    require(attn.patch >= 1 && attn.patch % 2 == 1, "model.attn: patch must be odd");
    require(attn.embed_dim >= 1, "model.attn: embed_dim must be >= 1");
    require(attn.heads >= 1, "model.attn: heads must be >= 1");
    require(attn.topk_ratio > 0.0 && attn.topk_ratio <= 1.0, "model.attn: topk_ratio must be in (0,1]");
}

void TrainConfig::validate() const {
    if (phase1_epochs < 0 || phase2_epochs < 0) throw ConfigError("training: epochs must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be positive");
    if (change_points[0] < 0 || change_points[1] < change_points[0])
        throw ConfigError("training: change_points must be non-decreasing and non-negative");
    if (!(kmeans_fraction > 0.0 && kmeans_fraction <= 1.0))
        throw ConfigError("training: kmeans_fraction must be in (0,1]");
    if (kmeans_iters < 1) throw ConfigError("training: kmeans_iters must be >= 1");
}

void DataConfig::validate(const ModelConfig& model) const {
    if (height < 1 || width < 1) throw ConfigError("dims: height and width must be positive");
    if (height % model.scale != 0 || width % model.scale != 0)
        throw ConfigError("dims: scale " + std::to_string(model.scale) + " does not divide " +
                          std::to_string(height) + "x" + std::to_string(width));
    if (samples < 1) throw ConfigError("data: samples must be >= 1");
    if (split[0] < 0 || split[1] < 0 || split[2] < 0 || split[0] + split[1] + split[2] != samples)
        throw ConfigError("data: split must be non-negative and sum to samples");
    if (noise_sigma < 0.0) throw ConfigError("data: noise_sigma must be non-negative");
    if (endmembers < 1 || blobs < 1) throw ConfigError("data: endmembers and blobs must be >= 1");
}

void RunConfig::validate() const {
    model.validate();
    training.validate();
    data.validate(model);
    for (int b : preview.bands)
        if (b >= model.hsi_bands) throw ConfigError("preview: band index out of range");
    if (preview.probe[0] < 0 || preview.probe[0] >= data.height || preview.probe[1] < 0 ||
        preview.probe[1] >= data.width)
        throw ConfigError("preview: probe outside the image");
}

namespace {

// Reads fields from one JSON object and rejects keys that were never read.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename V>
    void read(const char* key, V& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<V>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const std::string& where) {
    for (const auto& [name, value] : table)
        if (s == name) return value;
    throw ConfigError(where + ": unrecognized value '" + s + "'");
}

Upsampler parse_upsampler(const std::string& s) {
    return parse_enum<Upsampler>(
        s, {{"bp", Upsampler::BackProjection}, {"forward", Upsampler::Forward}, {"adjoint", Upsampler::Adjoint}},
        "model.sr_upsampler");
}

UpsampleSteps parse_steps(const std::string& s) {
    return parse_enum<UpsampleSteps>(s, {{"progressive", UpsampleSteps::Progressive}, {"single", UpsampleSteps::Single}},
                                     "model.sr_steps");
}

ClusterMode parse_cluster_mode(const std::string& s) {
    return parse_enum<ClusterMode>(
        s, {{"learned", ClusterMode::Learned}, {"kmeans", ClusterMode::KMeans}, {"none", ClusterMode::None}},
        "model.cluster_mode");
}

ResidualSign parse_sign(const std::string& s) {
    return parse_enum<ResidualSign>(
        s, {{"descent", ResidualSign::Descent}, {"backprojection", ResidualSign::BackProjection}},
        "model.sr_residual_sign");
}

void read_model(const json& j, ModelConfig& m) {
    ObjectReader r(j, "model");
    r.read("stages", m.stages);
    r.read("features", m.features);
    r.read("res_blocks", m.res_blocks);
    r.read("clusters", m.clusters);
    r.read("mlp_hidden", m.mlp_hidden);
    r.read("rcab_reduction", m.rcab_reduction);
    r.read("assigner_hidden", m.assigner_hidden);
    r.read("tau_init", m.tau_init);
    r.read("fusion_epsilon", m.fusion_epsilon);
    r.read("postprocess", m.postprocess);
    std::string s;
    s = to_string(m.cluster_mode);
    r.read("cluster_mode", s);
    m.cluster_mode = parse_cluster_mode(s);
    s = to_string(m.sr_upsampler);
    r.read("sr_upsampler", s);
    m.sr_upsampler = parse_upsampler(s);
    s = to_string(m.sr_steps);
    r.read("sr_steps", s);
    m.sr_steps = parse_steps(s);
    s = to_string(m.sr_residual_sign);
    r.read("sr_residual_sign", s);
    m.sr_residual_sign = parse_sign(s);
    if (const json* a = r.child("attn")) {
        ObjectReader ar(*a, "model.attn");
        ar.read("window", m.attn.window);
        ar.read("patch", m.attn.patch);
        ar.read("embed_dim", m.attn.embed_dim);
        ar.read("heads", m.attn.heads);
        ar.read("topk_ratio", m.attn.topk_ratio);
        ar.finish();
    }
    // Band counts and scale may also be given here when the model config is
    // used on its own (checkpoints).
    r.read("msi_bands", m.msi_bands);
    r.read("hsi_bands", m.hsi_bands);
    r.read("scale", m.scale);
    r.finish();
}

}  // namespace

std::string to_string(Upsampler v) {
    switch (v) {
        case Upsampler::BackProjection: return "bp";
        case Upsampler::Forward: return "forward";
        case Upsampler::Adjoint: return "adjoint";
    }
    return "bp";
}

std::string to_string(UpsampleSteps v) { return v == UpsampleSteps::Single ? "single" : "progressive"; }

std::string to_string(ClusterMode v) {
    switch (v) {
        case ClusterMode::Learned: return "learned";
        case ClusterMode::KMeans: return "kmeans";
        case ClusterMode::None: return "none";
    }
    return "learned";
}

std::string to_string(ResidualSign v) { return v == ResidualSign::Descent ? "descent" : "backprojection"; }

json model_config_to_json(const ModelConfig& m) {
    return json{{"msi_bands", m.msi_bands},
                {"hsi_bands", m.hsi_bands},
                {"scale", m.scale},
                {"stages", m.stages},
                {"features", m.features},
                {"res_blocks", m.res_blocks},
                {"clusters", m.clusters},
                {"cluster_mode", to_string(m.cluster_mode)},
                {"mlp_hidden", m.mlp_hidden},
                {"rcab_reduction", m.rcab_reduction},
                {"assigner_hidden", m.assigner_hidden},
                {"sr_upsampler", to_string(m.sr_upsampler)},
                {"sr_steps", to_string(m.sr_steps)},
                {"sr_residual_sign", to_string(m.sr_residual_sign)},
                {"tau_init", m.tau_init},
                {"fusion_epsilon", m.fusion_epsilon},
                {"postprocess", m.postprocess},
                {"attn",
                 {{"window", m.attn.window},
                  {"patch", m.attn.patch},
                  {"embed_dim", m.attn.embed_dim},
                  {"heads", m.attn.heads},
                  {"topk_ratio", m.attn.topk_ratio}}}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    read_model(j, m);
    m.validate();
    return m;
}

json to_json(const RunConfig& c) {
    json model = model_config_to_json(c.model);
    model.erase("msi_bands");
    model.erase("hsi_bands");
    model.erase("scale");
    return json{{"seed", c.seed},
                {"dims",
                 {{"height", c.data.height},
                  {"width", c.data.width},
                  {"hsi_bands", c.model.hsi_bands},
                  {"msi_bands", c.model.msi_bands},
                  {"scale", c.model.scale}}},
                {"model", model},
                {"training",
                 {{"phase1_epochs", c.training.phase1_epochs},
                  {"phase2_epochs", c.training.phase2_epochs},
                  {"learning_rate", c.training.learning_rate},
                  {"alpha_sr", c.training.alpha_sr},
                  {"alpha_ssr", c.training.alpha_ssr},
                  {"alpha_fus", c.training.alpha_fus},
                  {"change_points", c.training.change_points},
                  {"kmeans_fraction", c.training.kmeans_fraction},
                  {"kmeans_iters", c.training.kmeans_iters}}},
                {"data",
                 {{"samples", c.data.samples},
                  {"split", c.data.split},
                  {"noise_sigma", c.data.noise_sigma},
                  {"endmembers", c.data.endmembers},
                  {"blobs", c.data.blobs}}},
                {"preview", {{"bands", c.preview.bands}, {"probe", c.preview.probe}}},
                {"paths",
                 {{"dataset", c.paths.dataset}, {"checkpoints", c.paths.checkpoints}, {"reports", c.paths.reports}}}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    ObjectReader r(j, "config");
    r.read("seed", c.seed);
    if (const json* d = r.child("dims")) {
        ObjectReader dr(*d, "dims");
        dr.read("height", c.data.height);
        dr.read("width", c.data.width);
        dr.read("hsi_bands", c.model.hsi_bands);
        dr.read("msi_bands", c.model.msi_bands);
        dr.read("scale", c.model.scale);
        dr.finish();
    }
    if (const json* m = r.child("model")) read_model(*m, c.model);
    if (const json* t = r.child("training")) {
        ObjectReader tr(*t, "training");
        tr.read("phase1_epochs", c.training.phase1_epochs);
        tr.read("phase2_epochs", c.training.phase2_epochs);
        tr.read("learning_rate", c.training.learning_rate);
        tr.read("alpha_sr", c.training.alpha_sr);
        tr.read("alpha_ssr", c.training.alpha_ssr);
        tr.read("alpha_fus", c.training.alpha_fus);
        tr.read("change_points", c.training.change_points);
        tr.read("kmeans_fraction", c.training.kmeans_fraction);
        tr.read("kmeans_iters", c.training.kmeans_iters);
        tr.finish();
    }
    if (const json* d = r.child("data")) {
        ObjectReader dr(*d, "data");
        dr.read("samples", c.data.samples);
        dr.read("split", c.data.split);
        dr.read("noise_sigma", c.data.noise_sigma);
        dr.read("endmembers", c.data.endmembers);
        dr.read("blobs", c.data.blobs);
        dr.finish();
    }
    if (const json* p = r.child("preview")) {
        ObjectReader pr(*p, "preview");
        pr.read("bands", c.preview.bands);
        pr.read("probe", c.preview.probe);
        pr.finish();
    }
    if (const json* p = r.child("paths")) {
        ObjectReader pr(*p, "paths");
        pr.read("dataset", c.paths.dataset);
        pr.read("checkpoints", c.paths.checkpoints);
        pr.read("reports", c.paths.reports);
        pr.finish();
    }
    r.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace jssu

#include "jssu/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "jssu/config.hpp"
#include "jssu/data.hpp"
#include "jssu/gradcheck_suite.hpp"
#include "jssu/metrics.hpp"
#include "jssu/train.hpp"

namespace jssu {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Random seed (overrides the configuration)");
    cmd->add_option("--out", c.out, out_help);
}

RunConfig base_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

std::string one_line(std::string s) {
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

std::string fmt(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os << "epoch,train_loss,val_psnr\n";
    for (const auto& r : history) os << r.epoch << ',' << fmt(r.train_loss, 8) << ',' << fmt(r.val_psnr, 6) << '\n';
    return os.str();
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
    Common common;
    std::optional<int> height, width, scale, samples, hsi_bands, msi_bands;
    std::optional<double> noise;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    RunConfig cfg = base_config(a.common);
    if (a.height) cfg.data.height = *a.height;
    if (a.width) cfg.data.width = *a.width;
    if (a.scale) cfg.model.scale = *a.scale;
    if (a.hsi_bands) cfg.model.hsi_bands = *a.hsi_bands;
    if (a.msi_bands) cfg.model.msi_bands = *a.msi_bands;
    if (a.noise) cfg.data.noise_sigma = *a.noise;
    if (a.samples) {
        cfg.data.samples = *a.samples;
        const int val = *a.samples >= 3 ? std::max(1, *a.samples / 10) : 0;
        cfg.data.split = {*a.samples - 2 * val, val, val};
    }
    cfg.validate();
    const fs::path dir = a.common.out.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.common.out);
    const DatasetManifest m = synth_dataset(dir, cfg);
    out << "simulated " << m.samples.size() << " samples (train " << m.train.size() << ", val " << m.val.size()
        << ", test " << m.test.size() << ") -> " << (dir / "manifest.json").string() << "\n";
    return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    Common common;
    int phase = 1;
    std::string data;
    std::string checkpoint;
    std::optional<int> epochs;
    std::optional<double> lr;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::unique_ptr<TrainingState> state;
    if (a.phase == 1) {
        RunConfig cfg = base_config(a.common);
        if (a.epochs) cfg.training.phase1_epochs = *a.epochs;
        if (a.lr) cfg.training.learning_rate = *a.lr;
        cfg.validate();
        if (a.checkpoint.empty()) {
            state = std::make_unique<TrainingState>(cfg);
        } else {
            state = load_checkpoint(a.checkpoint);
            if (state->meta.phase != 1) throw ConfigError("--checkpoint for phase 1 must be a phase-1 checkpoint");
            state->config.training.phase1_epochs = cfg.training.phase1_epochs;
            state->config.training.learning_rate = cfg.training.learning_rate;
        }
    } else if (a.phase == 2) {
        const fs::path outdir = a.common.out.empty() ? fs::path(RunConfig{}.paths.checkpoints) : fs::path(a.common.out);
        const fs::path ckpt = a.checkpoint.empty() ? outdir / "phase1.jssu" : fs::path(a.checkpoint);
        state = load_checkpoint(ckpt);
        if (a.epochs) state->config.training.phase2_epochs = *a.epochs;
        if (a.lr) state->config.training.learning_rate = *a.lr;
        if (a.common.seed) {
            state->config.seed = *a.common.seed;
            state->rng.seed(*a.common.seed);
        }
        state->config.validate();
    } else {
        throw ConfigError("--phase must be 1 or 2");
    }
    const RunConfig& cfg = state->config;
    const fs::path data = a.data.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.data);
    const fs::path outdir = a.common.out.empty() ? fs::path(cfg.paths.checkpoints) : fs::path(a.common.out);
    const auto train = load_split(data, "train");
    const auto val = load_split(data, "val");
    if (train.empty()) throw ConfigError("dataset has no training samples");
    out << "signature: " << run_signature(*state->model, cfg.training) << "\n";
    if (a.phase == 1 && state->meta.epoch == 0) prepare_clusters(*state, train);

    const auto log = [&](const EpochRecord& r) {
        if (!a.quiet) out << "phase " << a.phase << " epoch " << r.epoch << " loss " << fmt(r.train_loss, 6) << " val_psnr "
                          << fmt(r.val_psnr, 4) << "\n" << std::flush;
    };
    const TrainResult result = a.phase == 1 ? train_phase1(*state, train, val, log) : train_phase2(*state, train, val, log);
    const std::string tag = "phase" + std::to_string(a.phase);
    fs::create_directories(outdir);
    {
        std::ofstream best(outdir / (tag + ".jssu"), std::ios::binary | std::ios::trunc);
        best.write(result.best_checkpoint.data(), static_cast<std::streamsize>(result.best_checkpoint.size()));
        if (!best) throw std::runtime_error("cannot write " + (outdir / (tag + ".jssu")).string());
    }
    save_checkpoint(*state, outdir / (tag + "_last.jssu"));
    write_text(outdir / (tag + "_loss.csv"), history_csv(result.history));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (result.aborted) throw NonFiniteError("training aborted: " + result.abort_reason);
    out << tag << " done: " << result.history.size() << " epochs, best val_psnr " << fmt(state->meta.best_val_psnr, 4)
        << " at epoch " << state->meta.best_epoch << ", " << fmt(secs, 1) << " s -> " << (outdir / (tag + ".jssu")).string()
        << "\n";
    return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string post = "auto";
    bool baseline = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (a.post != "auto" && a.post != "on" && a.post != "off") throw ConfigError("--post must be auto, on or off");
    std::vector<MetricsRow> rows;
    RunConfig cfg = base_config(a.common);
    if (a.baseline) {
        const fs::path data = a.data.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.data);
        const auto samples = load_split(data, a.split);
        const auto baseline = SpectralRegressionBaseline::fit(load_split(data, "train"), cfg.model.scale);
        rows = evaluate_baseline(baseline, samples);
    } else {
        if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --baseline)");
        const auto state = load_checkpoint(a.checkpoint);
        cfg = state->config;
        const fs::path data = a.data.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.data);
        const bool post = a.post == "on" || (a.post == "auto" && state->meta.phase == 2);
        rows = evaluate_model(*state->model, load_split(data, a.split), post);
    }
    const fs::path report =
        a.common.out.empty() ? fs::path(cfg.paths.reports) / ("metrics_" + a.split + ".csv") : fs::path(a.common.out);
    write_metrics_csv(report, rows);
    const MetricsRow mean = mean_row(rows);
    out << a.split << " (" << rows.size() << " images) PSNR/SSIM/SAM/ERGAS: " << format_table_cell(mean) << " -> "
        << report.string() << "\n";
    return kExitOk;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
    Common common;
    std::string checkpoint;
    std::string input;
    std::string output;
    bool preview = false;
    std::string post = "auto";
    std::vector<int> bands;
    std::vector<int> probe;
};

void emit_preview(const ImageCube& cube, const fs::path& output, std::array<int, 3> bands, std::array<int, 2> probe) {
    const int C = cube.channels;
    for (int i = 0; i < 3; ++i) {
        if (bands[i] < 0) bands[i] = i == 0 ? C - 1 : i == 1 ? C / 2 : 0;
        if (bands[i] >= C) throw ConfigError("preview band " + std::to_string(bands[i]) + " outside " + std::to_string(C) + " bands");
    }
    if (probe[0] < 0 || probe[0] >= cube.height || probe[1] < 0 || probe[1] >= cube.width)
        throw ConfigError("preview probe outside the image");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(cube.height) * cube.width * 3);
    for (int y = 0; y < cube.height; ++y)
        for (int x = 0; x < cube.width; ++x)
            for (int i = 0; i < 3; ++i) {
                const double v = std::clamp(static_cast<double>(cube.at(y, x, bands[i])), 0.0, 1.0);
                rgb[(static_cast<std::size_t>(y) * cube.width + x) * 3 + i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    fs::path stem = output;
    stem.replace_extension();
    write_png8(stem.string() + "_preview.png", cube.width, cube.height, 3, rgb);
    std::ostringstream csv;
    csv << "band,wavelength_nm,value\n";
    for (int b = 0; b < C; ++b) {
        csv << b << ',';
        if (!cube.wavelengths.empty()) csv << fmt(cube.wavelengths[b], 3);
        csv << ',' << fmt(cube.at(probe[0], probe[1], b), 8) << '\n';
    }
    write_text(stem.string() + "_spectrum.csv", csv.str());
}

int cmd_infer(const InferArgs& a, std::ostream& out) {
    if (a.post != "auto" && a.post != "on" && a.post != "off") throw ConfigError("--post must be auto, on or off");
    if (!fs::exists(a.input)) throw ConfigError("input not found: " + a.input);
    const auto state = load_checkpoint(a.checkpoint);
    RunConfig cfg = state->config;
    const ImageCube f = load_hsc(a.input);
    if (f.channels != cfg.model.msi_bands)
        throw ConfigError("input has " + std::to_string(f.channels) + " bands, model expects " +
                          std::to_string(cfg.model.msi_bands));
    const bool post = a.post == "on" || (a.post == "auto" && state->meta.phase == 2);
    const ImageCube result = infer(*state->model, f, post);
    save_hsc(result, a.output);
    if (a.preview) {
        std::array<int, 3> bands = cfg.preview.bands;
        std::array<int, 2> probe = cfg.preview.probe;
        if (!a.bands.empty()) {
            if (a.bands.size() != 3) throw ConfigError("--bands takes three indices");
            bands = {a.bands[0], a.bands[1], a.bands[2]};
        }
        if (!a.probe.empty()) {
            if (a.probe.size() != 2) throw ConfigError("--probe takes y and x");
            probe = {a.probe[0], a.probe[1]};
        }
        emit_preview(result, a.output, bands, probe);
    }
    out << "wrote " << result.height << "x" << result.width << "x" << result.channels << " cube -> " << a.output << "\n";
    return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
    Common common;
    std::vector<std::string> only;
    double tol = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
    const std::uint64_t seed = a.common.seed.value_or(base_config(a.common).seed);
    const auto& suite = gradcheck_suite();
    for (const auto& name : a.only)
        if (std::none_of(suite.begin(), suite.end(), [&](const NamedCheck& c) { return c.name == name; }))
            throw ConfigError("unknown check '" + name + "'");
    std::vector<std::string> failed;
    std::ostringstream table;
    table << std::left << std::setw(20) << "check" << std::setw(14) << "max_rel_err" << std::setw(10) << "instances"
          << "status\n";
    int run = 0;
    for (const auto& check : suite) {
        if (!a.only.empty() && std::find(a.only.begin(), a.only.end(), check.name) == a.only.end()) continue;
        const NamedCheckResult r = check.run(seed, a.tol);
        ++run;
        std::ostringstream err_col;
        err_col << std::scientific << std::setprecision(3) << r.report.max_rel_error;
        table << std::left << std::setw(20) << check.name << std::setw(14) << err_col.str() << std::setw(10)
              << r.instances << (r.report.passed ? "PASS" : "FAIL");
        if (!r.report.failure.empty()) table << " (" << r.report.failure << ")";
        table << "\n";
        if (!r.report.passed) failed.push_back(check.name);
    }
    out << table.str() << run << " checks, " << failed.size() << " failed (tol " << a.tol << ")\n";
    if (!failed.empty()) {
        std::string names;
        for (const auto& n : failed) names += (names.empty() ? "" : ",") + n;
        err << "error: internal: gradient check failed: " << names << "\n";
        return kExitInternal;
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatio-spectral super-resolution: simulate, train, evaluate and run the unfolded network"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset and its manifest");
    add_common(c_sim, sim.common, "Dataset directory");
    c_sim->add_option("--height", sim.height, "HR height");
    c_sim->add_option("--width", sim.width, "HR width");
    c_sim->add_option("--scale", sim.scale, "Spatial sampling factor s");
    c_sim->add_option("--samples", sim.samples, "Number of samples (split 80/10/10)");
    c_sim->add_option("--hsi-bands", sim.hsi_bands, "Hyperspectral band count C");
    c_sim->add_option("--msi-bands", sim.msi_bands, "Multispectral band count c");
    c_sim->add_option("--noise", sim.noise, "Noise standard deviation");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train phase 1 (backbone) or phase 2 (post-processing)");
    add_common(c_train, tr.common, "Checkpoint directory");
    c_train->add_option("--phase", tr.phase, "1 or 2")->check(CLI::IsMember({1, 2}));
    c_train->add_option("--data", tr.data, "Dataset directory or manifest");
    c_train->add_option("--checkpoint", tr.checkpoint, "Phase 2 input, or a phase-1 checkpoint to resume");
    c_train->add_option("--epochs", tr.epochs, "Epochs for the selected phase");
    c_train->add_option("--lr", tr.lr, "Learning rate");
    c_train->add_flag("--quiet", tr.quiet, "Do not log every epoch");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Compute PSNR/SSIM/SAM/ERGAS on a split");
    add_common(c_eval, ev.common, "Report CSV path");
    c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
    c_eval->add_option("--data", ev.data, "Dataset directory or manifest");
    c_eval->add_option("--split", ev.split, "train, val or test");
    c_eval->add_option("--post", ev.post, "Post-processing: auto, on or off");
    c_eval->add_flag("--baseline", ev.baseline, "Evaluate bicubic + least-squares spectral regression instead");

    InferArgs inf;
    auto* c_infer = app.add_subcommand("infer", "Reconstruct an HR-HSI cube from an LR-MSI cube");
    add_common(c_infer, inf.common, "Unused; see --output");
    c_infer->add_option("--checkpoint", inf.checkpoint, "Model checkpoint")->required();
    c_infer->add_option("--input", inf.input, "LR-MSI .hsc file")->required();
    c_infer->add_option("--output", inf.output, "Output .hsc file")->required();
    c_infer->add_flag("--emit-preview", inf.preview, "Write a false-colour PNG and a probe spectrum CSV");
    c_infer->add_option("--post", inf.post, "Post-processing: auto, on or off");
    c_infer->add_option("--bands", inf.bands, "Preview bands R G B")->expected(3);
    c_infer->add_option("--probe", inf.probe, "Probe pixel y x")->expected(2);

    GradcheckArgs gc;
    auto* c_grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    add_common(c_grad, gc.common, "Unused");
    c_grad->add_option("--only", gc.only, "Run only the named checks");
    c_grad->add_option("--tol", gc.tol, "Relative error tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: invalid-input: " << one_line(e.what()) << "\n";
        return kExitInvalid;
    }

    try {
        if (c_sim->parsed()) return cmd_simulate(sim, out);
        if (c_train->parsed()) return cmd_train(tr, out);
        if (c_eval->parsed()) return cmd_eval(ev, out);
        if (c_infer->parsed()) return cmd_infer(inf, out);
        if (c_grad->parsed()) return cmd_gradcheck(gc, out, err);
    } catch (const NonFiniteError& e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return kExitInternal;
    } catch (const std::invalid_argument& e) {
        err << "error: invalid-input: " << one_line(e.what()) << "\n";
        return kExitInvalid;
    } catch (const FormatError& e) {
        err << "error: invalid-input: " << one_line(e.what()) << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return kExitInternal;
    }
    err << "error: internal: no command ran\n";
    return kExitInternal;
}

}  // namespace jssu

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "jssu/cli.hpp"
#include "jssu/train.hpp"

using namespace jssu;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "jssu");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

/// 16x16 cubes, four samples, a one-stage narrow model.
std::string write_small_config(const testing::TempDir& dir) {
    RunConfig cfg;
    cfg.data.height = 16;
    cfg.data.width = 16;
    cfg.data.samples = 4;
    cfg.data.split = {2, 1, 1};
    cfg.model.stages = 1;
    cfg.model.features = 4;
    cfg.model.res_blocks = 1;
    cfg.model.assigner_hidden = 4;
    cfg.model.attn.window = 5;
    cfg.model.attn.patch = 3;
    cfg.model.attn.embed_dim = 4;
    cfg.model.attn.heads = 1;
    cfg.training.learning_rate = 1e-3;
    const fs::path path = dir / "config.json";
    std::ofstream(path) << to_json(cfg).dump(2);
    return path.string();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({}).code == kExitInvalid);
    const Run bogus = cli({"frobnicate"});
    CHECK(bogus.code == kExitInvalid);
    CHECK(bogus.err.rfind("error: invalid-input: ", 0) == 0);
    CHECK(cli({"train", "--phase", "3"}).code == kExitInvalid);
    CHECK(cli({"eval", "--config", "/nonexistent/config.json"}).code == kExitInvalid);
}

TEST_CASE("simulate writes a seeded, reproducible dataset") {
    testing::TempDir dir("cli_sim");
    const Run a = cli({"simulate", "--seed", "7", "--out", (dir / "a").string()});
    REQUIRE(a.code == kExitOk);
    CHECK(a.out.find("simulated 10 samples (train 8, val 1, test 1)") != std::string::npos);
    REQUIRE(cli({"simulate", "--seed", "7", "--out", (dir / "b").string()}).code == kExitOk);
    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path twin = dir / "b" / fs::relative(e.path(), dir / "a");
        REQUIRE(fs::exists(twin));
        if (e.path().filename() != "manifest.json") CHECK(slurp(e.path()) == slurp(twin));
        ++files;
    }
    CHECK(files == 41);
    const ImageCube G = load_hsc(dir / "a" / "sample_000" / "G.hsc");
    CHECK(G.height == 32);
    CHECK(G.channels == 8);

    REQUIRE(cli({"simulate", "--seed", "8", "--out", (dir / "c").string()}).code == kExitOk);
    CHECK(slurp(dir / "a" / "sample_000" / "G.hsc") != slurp(dir / "c" / "sample_000" / "G.hsc"));
}

TEST_CASE("simulate rejects a scale that does not divide the size") {
    testing::TempDir dir("cli_bad");
    const Run r = cli({"simulate", "--height", "30", "--width", "30", "--scale", "4", "--out", dir.path().string()});
    CHECK(r.code == kExitInvalid);
    CHECK(r.err.find("invalid-input") != std::string::npos);
}

TEST_CASE("train, eval and infer end to end") {
    testing::TempDir dir("cli_e2e");
    const std::string config = write_small_config(dir);
    const std::string data = (dir / "data").string(), ck = (dir / "ck").string();
    REQUIRE(cli({"simulate", "--config", config, "--out", data}).code == kExitOk);

    const Run p1 = cli({"train", "--config", config, "--data", data, "--out", ck, "--epochs", "3"});
    REQUIRE(p1.code == kExitOk);
    CHECK(p1.out.find("signature: ") != std::string::npos);
    CHECK(p1.out.find("phase 1 epoch 3 loss ") != std::string::npos);
    CHECK(fs::exists(dir / "ck" / "phase1.jssu"));
    CHECK(fs::exists(dir / "ck" / "phase1_last.jssu"));
    const std::string loss1 = slurp(dir / "ck" / "phase1_loss.csv");
    CHECK(loss1.rfind("epoch,train_loss,val_psnr\n", 0) == 0);
    CHECK(count_lines(loss1) == 4);

    const auto backbone = [&](const std::string& file) {
        return parameter_digest(load_checkpoint(dir / "ck" / file)->model->params, {"sr/", "ssr/", "fusion/"});
    };
    const Run p2 = cli({"train", "--phase", "2", "--config", config, "--data", data, "--out", ck, "--epochs", "2"});
    REQUIRE(p2.code == kExitOk);
    CHECK(count_lines(slurp(dir / "ck" / "phase2_loss.csv")) == 3);
    CHECK(backbone("phase2.jssu") == backbone("phase1.jssu"));

    const std::string report = (dir / "report.csv").string();
    const Run ev = cli({"eval", "--checkpoint", (dir / "ck" / "phase2.jssu").string(), "--data", data, "--out", report});
    REQUIRE(ev.code == kExitOk);
    CHECK(ev.out.find("test (1 images) PSNR/SSIM/SAM/ERGAS: ") != std::string::npos);
    const std::string csv = slurp(report);
    CHECK(csv.find("\nmean,") != std::string::npos);
    CHECK(count_lines(csv) == 3);

    const Run base = cli({"eval", "--baseline", "--config", config, "--data", data, "--out", report});
    CHECK(base.code == kExitOk);
    CHECK(cli({"eval", "--checkpoint", (dir / "missing.jssu").string(), "--data", data}).code == kExitInvalid);

    const std::string input = (dir / "data" / "sample_003" / "f.hsc").string();
    const std::string output = (dir / "x.hsc").string();
    const std::string ckpt = (dir / "ck" / "phase2.jssu").string();
    const Run inf = cli({"infer", "--checkpoint", ckpt, "--input", input, "--output", output, "--emit-preview"});
    REQUIRE(inf.code == kExitOk);
    const ImageCube x = load_hsc(output);
    CHECK(x.height == 16);
    CHECK(x.width == 16);
    CHECK(x.channels == 8);
    CHECK(fs::exists(dir / "x_preview.png"));
    const std::string spectrum = slurp(dir / "x_spectrum.csv");
    CHECK(spectrum.rfind("band,wavelength_nm,value\n", 0) == 0);
    CHECK(count_lines(spectrum) == 9);
    const std::string first = slurp(output);
    REQUIRE(cli({"infer", "--checkpoint", ckpt, "--input", input, "--output", output}).code == kExitOk);
    CHECK(slurp(output) == first);

    const std::string wrong = (dir / "data" / "sample_003" / "G.hsc").string();
    CHECK(cli({"infer", "--checkpoint", ckpt, "--input", wrong, "--output", output}).code == kExitInvalid);
}

TEST_CASE("gradcheck runs the suite and reports failures") {
    const Run all = cli({"gradcheck"});
    CHECK(all.code == kExitOk);
    CHECK(all.out.find("check") != std::string::npos);
    CHECK(all.out.find(", 0 failed") != std::string::npos);
    CHECK(count_lines(all.out) >= 14);

    const Run one = cli({"gradcheck", "--only", "fusion"});
    CHECK(one.code == kExitOk);
    CHECK(one.out.find("1 checks, 0 failed") != std::string::npos);

    CHECK(cli({"gradcheck", "--only", "nope"}).code == kExitInvalid);

    const Run strict = cli({"gradcheck", "--only", "conv2d", "--tol", "1e-30"});
    CHECK(strict.code == kExitInternal);
    CHECK(strict.err.find("error: internal: gradient check failed: conv2d") != std::string::npos);
}

}  // TEST_SUITE

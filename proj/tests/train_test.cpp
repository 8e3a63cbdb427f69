#include <doctest.h>

#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "jssu/train.hpp"
#include "metric_oracles.hpp"

using namespace jssu;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 5;
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
    cfg.training.phase1_epochs = 2;
    cfg.training.phase2_epochs = 2;
    cfg.training.learning_rate = 1e-3;
    return cfg;
}

struct TinyData {
    testing::TempDir dir{"traindata"};
    std::vector<LoadedSample> train, val, test;

    explicit TinyData(const RunConfig& cfg) {
        synth_dataset(dir.path(), cfg);
        train = load_split(dir.path(), "train");
        val = load_split(dir.path(), "val");
        test = load_split(dir.path(), "test");
    }
};

Tensor<float> filled(Shape s, float v) { return Tensor<float>(std::move(s), v); }

}  // namespace

TEST_SUITE("train-eval") {

TEST_CASE("alpha schedule follows the published value lists") {
    const TrainConfig tc;
    const Alphas a0 = alpha_at_epoch(tc, 0);
    CHECK(a0.sr == 2.0);
    CHECK(a0.ssr == 1.0);
    CHECK(a0.fus == 0.5);
    const Alphas a1 = alpha_at_epoch(tc, 300);
    CHECK(a1.sr == 0.5);
    CHECK(a1.ssr == 1.0);
    CHECK(a1.fus == 1.0);
    const Alphas a2 = alpha_at_epoch(tc, 600);
    CHECK(a2.sr == 0.0);
    CHECK(a2.ssr == 0.5);
    CHECK(a2.fus == 1.0);
    CHECK(alpha_at_epoch(tc, 299).sr == 2.0);
    CHECK(alpha_at_epoch(tc, 5000).fus == 1.0);
    CHECK_THROWS(alpha_at_epoch(tc, -1));
}

TEST_CASE("loss: zero at the references, degenerate weights and a hand-computed K=2 case") {
    const Tensor<float> F = filled({4, 4, 3}, 0.0f), g = filled({2, 2, 8}, 0.0f), G = filled({4, 4, 8}, 0.0f);
    const Alphas w{2.0, 1.0, 0.5};
    CHECK(loss_phase1<float>({F, F}, {g, g}, {G, G}, F, g, G, w).item() == 0.0f);

    const std::vector<Tensor<float>> sr = {filled({4, 4, 3}, 0.1f), filled({4, 4, 3}, -0.3f)};
    const std::vector<Tensor<float>> ssr = {filled({2, 2, 8}, 0.2f), filled({2, 2, 8}, 0.4f)};
    const std::vector<Tensor<float>> fus = {filled({4, 4, 8}, 0.5f), filled({4, 4, 8}, 0.25f)};
    CHECK(loss_phase1(sr, ssr, fus, F, g, G, Alphas{}).item() == doctest::Approx(0.25));
    // 0.25 + 2/2 (0.1 + 0.3) + 1/2 (0.2 + 0.4) + 0.5/2 (0.5 + 0.25)
    const double expect = 0.25 + 1.0 * 0.4 + 0.5 * 0.6 + 0.25 * 0.75;
    CHECK(loss_phase1(sr, ssr, fus, F, g, G, w).item() == doctest::Approx(expect).epsilon(1e-6));
    CHECK_THROWS(loss_phase1<float>({F}, {g, g}, {G, G}, F, g, G, w));
}

TEST_CASE("loss is invariant to pixel permutations") {
    Rng rng(1);
    const Tensor<double> a = testing::random_tensor(rng, {2, 3, 2});
    const Tensor<double> b = testing::random_tensor(rng, {2, 3, 2});
    std::vector<double> ra(a.data().rbegin(), a.data().rend()), rb(b.data().rbegin(), b.data().rend());
    const Tensor<double> pa({2, 3, 2}, ra), pb({2, 3, 2}, rb);
    CHECK(mean_abs_diff(a, b).item() == doctest::Approx(mean_abs_diff(pa, pb).item()).epsilon(1e-14));
}

TEST_CASE("adam first step, zero gradient and the constant-gradient limit") {
    ParamSet<float> params;
    Tensor<float> p = params.add("p", Tensor<float>({3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
    Tensor<float> q = params.add("q", Tensor<float>({2}, std::vector<float>{0.3f, 0.7f}));
    const Tensor<float> gvec({3}, std::vector<float>{0.2f, -3.0f, 1e-3f});
    Adam adam;
    sum(mul(p, gvec)).backward();
    adam.step(params, 1e-2);
    CHECK(adam.steps() == 1);
    const float start[] = {1.0f, -2.0f, 0.5f};
    for (int i = 0; i < 3; ++i) {
        const double g = gvec[i];
        const double expect = start[i] - 1e-2 * g / (std::abs(g) + 1e-8);
        CHECK(p[i] == doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK(q[0] == 0.3f);
    CHECK(q[1] == 0.7f);

    params.zero_grad();
    const float before = q[0];
    adam.step(params, 1e-2);
    CHECK(adam.steps() == 2);
    CHECK(q[0] == before);

    ParamSet<float> one;
    Tensor<float> x = one.add("x", Tensor<float>({1}, 0.0f));
    Adam limit;
    float prev = 0.0f;
    for (int i = 0; i < 2000; ++i) {
        one.zero_grad();
        sum(scale(x, 0.5f)).backward();
        prev = x[0];
        limit.step(one, 1e-3);
    }
    CHECK(x[0] - prev == doctest::Approx(-1e-3).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients") {
    ParamSet<float> params;
    Tensor<float> p = params.add("p", Tensor<float>({1}, 1.0f));
    sum(scale(p, std::numeric_limits<float>::infinity())).backward();
    Adam adam;
    CHECK_THROWS_AS(adam.step(params, 1e-3), NonFiniteError);
}

TEST_CASE("metrics identity cases and closed forms") {
    Rng rng(2);
    const ImageCube ref = testing::random_cube(rng, 6, 6, 3, 0.1, 0.8);
    CHECK(psnr(ref, ref) == 100.0);
    CHECK(ssim(ref, ref) == doctest::Approx(1.0));
    CHECK(sam(ref, ref) < 1e-4);
    CHECK(ergas(ref, ref, 2) == 0.0);
    ImageCube off = ref;
    for (auto& v : off.data) v += 0.1f;
    CHECK(psnr(off, ref) == doctest::Approx(20.0).epsilon(1e-5));
}

TEST_CASE("metrics match scalar-loop oracles") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageCube x = testing::random_cube(rng, 4, 4, 3);
        const ImageCube r = testing::random_cube(rng, 4, 4, 3);
        CHECK(std::abs(psnr(x, r) - oracle::psnr(x, r)) < 1e-6);
        CHECK(std::abs(ssim(x, r) - oracle::ssim(x, r)) < 1e-6);
        CHECK(std::abs(sam(x, r) - oracle::sam(x, r)) < 1e-6);
        CHECK(std::abs(ergas(x, r, 2) - oracle::ergas(x, r, 2)) < 1e-6);
    }
    const ImageCube x = testing::random_cube(rng, 11, 10, 2);
    const ImageCube r = testing::random_cube(rng, 11, 10, 2);
    CHECK(std::abs(ssim(x, r) - oracle::ssim(x, r)) < 1e-6);
}

TEST_CASE("ergas leaves out all-zero reference bands") {
    Rng rng(4);
    ImageCube r = testing::random_cube(rng, 4, 4, 3, 0.2, 0.9);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) r.at(y, x, 1) = 0.0f;
    const ImageCube x = testing::random_cube(rng, 4, 4, 3);
    int excluded = 0;
    const double e = ergas(x, r, 4, &excluded);
    CHECK(excluded == 1);
    CHECK(std::isfinite(e));
    CHECK(e == doctest::Approx(oracle::ergas(x, r, 4)));
}

TEST_CASE("metric ranges") {
    Rng rng(5);
    for (int i = 0; i < 5; ++i) {
        const ImageCube x = testing::random_cube(rng, 5, 5, 4), r = testing::random_cube(rng, 5, 5, 4);
        const MetricsRow m = evaluate_pair("x", x, r, 2);
        CHECK(m.psnr >= 0.0);
        CHECK((m.ssim >= -1.0 && m.ssim <= 1.0));
        CHECK((m.sam >= 0.0 && m.sam <= 180.0));
        CHECK(m.ergas >= 0.0);
    }
}

TEST_CASE("table cell formatting round trip") {
    const MetricsRow row = parse_table_cell("37.40 / 0.9427 / 8.96 / 8.28");
    CHECK(row.psnr == doctest::Approx(37.40));
    CHECK(row.ssim == doctest::Approx(0.9427));
    CHECK(row.sam == doctest::Approx(8.96));
    CHECK(row.ergas == doctest::Approx(8.28));
    CHECK(format_table_cell(row) == "37.40 / 0.9427 / 8.96 / 8.28");
    CHECK_THROWS(parse_table_cell("37.40 / 0.9427"));
}

TEST_CASE("metrics csv has a header and a mean row") {
    const std::vector<MetricsRow> rows = {{"a", 30.0, 0.9, 2.0, 4.0}, {"b", 20.0, 0.7, 4.0, 6.0}};
    const std::string csv = metrics_csv(rows);
    CHECK(csv.rfind("image_id,psnr,ssim,sam,ergas\n", 0) == 0);
    CHECK(csv.find("\nmean,25.000000,0.800000,3.000000,5.000000\n") != std::string::npos);
}

TEST_CASE("checkpoint round trip and resume are bit exact") {
    RunConfig cfg = tiny_config();
    TinyData data(cfg);

    TrainingState straight(cfg);
    prepare_clusters(straight, data.train);
    cfg.training.phase1_epochs = 1;
    straight.config.training.phase1_epochs = 1;
    train_phase1(straight, data.train, data.val);
    const std::string midway = serialize_checkpoint(straight);
    straight.config.training.phase1_epochs = 2;
    train_phase1(straight, data.train, data.val);

    TrainingState resumed(cfg);
    deserialize_checkpoint(midway, resumed);
    CHECK(serialize_checkpoint(resumed) == midway);
    resumed.config.training.phase1_epochs = 2;
    train_phase1(resumed, data.train, data.val);
    CHECK(serialize_checkpoint(resumed) == serialize_checkpoint(straight));

    testing::TempDir dir("ckpt");
    save_checkpoint(straight, dir / "a.jssu");
    const auto loaded = load_checkpoint(dir / "a.jssu");
    CHECK(serialize_checkpoint(*loaded) == serialize_checkpoint(straight));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.jssu"), ConfigError);
    std::ofstream(dir / "bad.jssu") << "nope";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.jssu"), FormatError);
}

TEST_CASE("phase 1: zero epochs, determinism, best-checkpoint selection and loss decrease") {
    RunConfig cfg = tiny_config();
    TinyData data(cfg);
    {
        RunConfig zero = cfg;
        zero.training.phase1_epochs = 0;
        TrainingState s(zero);
        const TrainResult r = train_phase1(s, data.train, data.val);
        CHECK(r.history.empty());
        TrainingState back(zero);
        deserialize_checkpoint(r.best_checkpoint, back);
        CHECK(parameter_digest(back.model->params, {""}) == parameter_digest(TrainingState(zero).model->params, {""}));
        CHECK(back.meta.best_epoch == 0);
    }
    cfg.training.phase1_epochs = 6;
    TrainingState a(cfg), b(cfg);
    const TrainResult ra = train_phase1(a, data.train, data.val);
    const TrainResult rb = train_phase1(b, data.train, data.val);
    REQUIRE(ra.history.size() == 6);
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
        CHECK(ra.history[i].val_psnr == rb.history[i].val_psnr);
    }
    CHECK(ra.best_checkpoint == rb.best_checkpoint);
    CHECK(ra.history.back().train_loss < ra.history.front().train_loss);

    double best = -1.0;
    for (const auto& h : ra.history) best = std::max(best, h.val_psnr);
    TrainingState chosen(cfg);
    deserialize_checkpoint(ra.best_checkpoint, chosen);
    CHECK(chosen.meta.best_val_psnr >= best);
    const auto rows = evaluate_model(*chosen.model, data.val, false);
    CHECK(rows[0].psnr == doctest::Approx(chosen.meta.best_val_psnr).epsilon(1e-9));
}

TEST_CASE("phase 2 freezes the backbone; zero epochs keeps phase-1 metrics") {
    RunConfig cfg = tiny_config();
    TinyData data(cfg);
    TrainingState state(cfg);
    train_phase1(state, data.train, data.val);
    const std::vector<std::string> backbone = {"sr/", "ssr/", "fusion/"};
    const auto digest = parameter_digest(state.model->params, backbone);
    const auto before = evaluate_model(*state.model, data.test, false);

    TrainingState zero(cfg);
    deserialize_checkpoint(serialize_checkpoint(state), zero);
    zero.config.training.phase2_epochs = 0;
    train_phase2(zero, data.train, data.val);
    const auto same = evaluate_model(*zero.model, data.test, true);
    CHECK(same[0].psnr == before[0].psnr);

    const auto post_before = parameter_digest(state.model->params, {"post/"});
    const TrainResult r = train_phase2(state, data.train, data.val);
    CHECK(r.history.size() == 2);
    CHECK(parameter_digest(state.model->params, backbone) == digest);
    CHECK(parameter_digest(state.model->params, {"post/"}) != post_before);
    TrainingState best(cfg);
    deserialize_checkpoint(r.best_checkpoint, best);
    CHECK(best.meta.phase == 2);
    CHECK(parameter_digest(best.model->params, backbone) == digest);
}

TEST_CASE("inference clamps and has the HR-HSI shape") {
    RunConfig cfg = tiny_config();
    TinyData data(cfg);
    TrainingState state(cfg);
    const ImageCube out = infer(*state.model, data.test[0].cubes.f, true);
    CHECK(out.height == 16);
    CHECK(out.channels == 8);
    CHECK(std::all_of(out.data.begin(), out.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    CHECK(infer(*state.model, data.test[0].cubes.f, true).data == out.data);
}

TEST_CASE("spectral regression baseline recovers an affine spectral map") {
    RunConfig cfg = tiny_config();
    TinyData data(cfg);
    const auto b = SpectralRegressionBaseline::fit(data.train, 2);
    CHECK(b.coefficients.size() == 4 * 8);
    const auto rows = evaluate_baseline(b, data.test);
    CHECK(rows.size() == 1);
    CHECK(rows[0].psnr > 20.0);
}

TEST_CASE("run signatures tell schedules apart") {
    RunConfig cfg = tiny_config();
    TrainingState s(cfg);
    TrainConfig other = cfg.training;
    other.alpha_sr = {1.0, 1.0, 0.5};
    CHECK(run_signature(*s.model, cfg.training) != run_signature(*s.model, other));
}

}  // TEST_SUITE

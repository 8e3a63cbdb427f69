#include <doctest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "jssu/data.hpp"

using namespace jssu;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

DegradationSpec box_spec(int scale, int bands) {
    DegradationSpec spec;
    spec.scale = scale;
    spec.kernel_size = 3;
    spec.kernel.assign(9, 1.0 / 9.0);
    spec.msi_bands = bands;
    spec.hsi_bands = bands;
    spec.response.assign(static_cast<std::size_t>(bands) * bands, 0.0);
    for (int i = 0; i < bands; ++i) spec.response[i * bands + i] = 1.0;
    return spec;
}

std::vector<double> random_response(Rng& rng, int c, int C) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> r(static_cast<std::size_t>(c) * C);
    for (int i = 0; i < c; ++i) {
        double s = 0.0;
        for (int j = 0; j < C; ++j) s += r[i * C + j] = dist(rng);
        for (int j = 0; j < C; ++j) r[i * C + j] /= s;
    }
    return r;
}

}  // namespace

TEST_SUITE("data-sim") {

TEST_CASE("hsc round trip is bit exact, with and without wavelengths") {
    testing::TempDir dir("hsc");
    Rng rng(1);
    ImageCube cube = testing::random_cube(rng, 4, 4, 3);
    save_hsc(cube, dir / "a.hsc");
    const ImageCube back = load_hsc(dir / "a.hsc");
    CHECK(back.height == 4);
    CHECK(back.channels == 3);
    CHECK(back.data == cube.data);
    CHECK(back.wavelengths.empty());

    cube.wavelengths = {450.0, 550.5, 650.25};
    save_hsc(cube, dir / "b.hsc");
    CHECK(load_hsc(dir / "b.hsc").wavelengths == cube.wavelengths);
}

TEST_CASE("hsc format errors") {
    testing::TempDir dir("hscerr");
    write_bytes(dir / "empty.hsc", "");
    CHECK_THROWS_WITH_AS(load_hsc(dir / "empty.hsc"), doctest::Contains("bad magic"), FormatError);

    Rng rng(2);
    save_hsc(testing::random_cube(rng, 4, 4, 3), dir / "ok.hsc");
    const std::string bytes = read_bytes(dir / "ok.hsc");
    write_bytes(dir / "short.hsc", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_WITH_AS(load_hsc(dir / "short.hsc"), doctest::Contains("truncated payload"), FormatError);

    std::string huge = bytes;
    const std::uint32_t big = 0xFFFFFFFFu;
    for (int i = 0; i < 3; ++i) std::memcpy(huge.data() + 8 + 4 * i, &big, 4);
    write_bytes(dir / "huge.hsc", huge);
    CHECK_THROWS_WITH_AS(load_hsc(dir / "huge.hsc"), doctest::Contains("dimension overflow"), FormatError);
}

TEST_CASE("hsc values are clamped to [0,1] on load") {
    testing::TempDir dir("clamp");
    ImageCube cube(1, 2, 1);
    cube.data = {-0.5f, 1.5f};
    save_hsc(cube, dir / "c.hsc");
    const ImageCube back = load_hsc(dir / "c.hsc");
    CHECK(back.data[0] == 0.0f);
    CHECK(back.data[1] == 1.0f);
}

TEST_CASE("band directory import") {
    testing::TempDir dir("bands");
    fs::create_directories(dir / "zeros");
    for (const char* name : {"b0.png", "b1.png", "b2.png"})
        write_png16(dir / "zeros" / name, 8, 8, std::vector<std::uint16_t>(64, 0));
    const ImageCube z = import_band_directory(dir / "zeros");
    CHECK(z.height == 8);
    CHECK(z.width == 8);
    CHECK(z.channels == 3);
    CHECK(std::all_of(z.data.begin(), z.data.end(), [](float v) { return v == 0.0f; }));

    fs::create_directories(dir / "ordered");
    std::vector<std::uint16_t> px(64, 0);
    px[0] = 65535;
    write_png16(dir / "ordered" / "b1.png", 8, 8, px);
    write_png16(dir / "ordered" / "b0.png", 8, 8, std::vector<std::uint16_t>(64, 0));
    const ImageCube o = import_band_directory(dir / "ordered");
    CHECK(o.at(0, 0, 0) == 0.0f);
    CHECK(o.at(0, 0, 1) == 1.0f);

    fs::create_directories(dir / "mixed");
    write_png16(dir / "mixed" / "a.png", 8, 8, std::vector<std::uint16_t>(64, 0));
    write_png16(dir / "mixed" / "b.png", 9, 8, std::vector<std::uint16_t>(72, 0));
    CHECK_THROWS(import_band_directory(dir / "mixed"));
}

TEST_CASE("spectral_degrade examples") {
    Rng rng(3);
    ImageCube flat(3, 3, 8);
    std::fill(flat.data.begin(), flat.data.end(), 0.42f);
    const auto R = random_response(rng, 3, 8);
    for (float v : spectral_degrade(flat, R, 3).data) CHECK(v == doctest::Approx(0.42).epsilon(1e-6));

    const ImageCube cube = testing::random_cube(rng, 4, 5, 4);
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    CHECK(spectral_degrade(cube, eye, 4).data == cube.data);

    const ImageCube big = testing::random_cube(rng, 4, 5, 8);
    const ImageCube out = spectral_degrade(big, R, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
            for (int b = 0; b < 3; ++b) {
                double dot = 0.0;
                for (int j = 0; j < 8; ++j) dot += R[b * 8 + j] * big.at(y, x, j);
                CHECK(std::abs(out.at(y, x, b) - dot) < 1e-6);
            }
    CHECK_THROWS(spectral_degrade(big, R, 4));
}

TEST_CASE("spatial_degrade examples") {
    DegradationSpec spec = default_degradation(2, 3, 3, 0.0);
    ImageCube flat(8, 8, 3);
    std::fill(flat.data.begin(), flat.data.end(), 0.5f);
    const ImageCube low = spatial_degrade(flat, spec);
    CHECK(low.height == 4);
    CHECK(low.width == 4);
    // interior: the 5x5 support at decimated pixel (2,2) -> source (4,4) lies inside
    CHECK(low.at(2, 2, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(low.at(0, 0, 0) < 0.5f);

    ImageCube ramp(6, 6, 1);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) ramp.at(y, x, 0) = static_cast<float>((y * 6 + x) / 40.0);
    const ImageCube d = spatial_degrade(ramp, box_spec(2, 1));
    REQUIRE(d.height == 3);
    for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int y = 2 * oy + dy, x = 2 * ox + dx;
                    if (y >= 0 && y < 6 && x >= 0 && x < 6) acc += ramp.at(y, x, 0) / 9.0;
                }
            CHECK(std::abs(d.at(oy, ox, 0) - acc) < 1e-6);
        }

    ImageCube odd(7, 8, 1);
    CHECK_THROWS(spatial_degrade(odd, spec));
}

TEST_CASE("spatial_degrade is linear without noise") {
    Rng rng(4);
    const DegradationSpec spec = default_degradation(2, 3, 3, 0.0);
    const ImageCube u = testing::random_cube(rng, 8, 8, 3, 0.0, 0.4);
    const ImageCube v = testing::random_cube(rng, 8, 8, 3, 0.0, 0.4);
    ImageCube mix(8, 8, 3);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 0.7f * u.data[i] + 0.3f * v.data[i];
    const ImageCube du = spatial_degrade(u, spec), dv = spatial_degrade(v, spec), dm = spatial_degrade(mix, spec);
    for (std::size_t i = 0; i < dm.data.size(); ++i)
        CHECK(std::abs(dm.data[i] - (0.7 * du.data[i] + 0.3 * dv.data[i])) < 1e-6);
}

TEST_CASE("spatial_degrade noise is seeded and clamped") {
    Rng rng(5);
    const DegradationSpec spec = default_degradation(2, 3, 3, 0.2);
    const ImageCube u = testing::random_cube(rng, 8, 8, 3);
    const ImageCube a = spatial_degrade(u, spec, 17), b = spatial_degrade(u, spec, 17), c = spatial_degrade(u, spec, 18);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
    CHECK(std::all_of(a.data.begin(), a.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
}

TEST_CASE("degradation spec invariants") {
    const auto k = gaussian_kernel(2);
    CHECK(k.size() == 25);
    CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0));
    const auto R = default_response(3, 8);
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 8; ++j) {
            CHECK(R[i * 8 + j] >= 0.0);
            s += R[i * 8 + j];
        }
        CHECK(s == doctest::Approx(1.0));
    }
    DegradationSpec bad = default_degradation(2, 3, 8, 0.0);
    bad.kernel[0] += 0.5;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("make_quadruple shapes, identity case and commutation") {
    Rng rng(6);
    const ImageCube G = testing::random_cube(rng, 16, 16, 8);
    const Quadruple q = make_quadruple(G, default_degradation(4, 3, 8, 0.0));
    CHECK((q.f.height == 4 && q.f.width == 4 && q.f.channels == 3));
    CHECK((q.F.height == 16 && q.F.width == 16 && q.F.channels == 3));
    CHECK((q.g.height == 4 && q.g.width == 4 && q.g.channels == 8));
    CHECK((q.G.height == 16 && q.G.channels == 8));

    DegradationSpec id = box_spec(1, 8);
    id.kernel_size = 1;
    id.kernel = {1.0};
    const Quadruple same = make_quadruple(G, id);
    CHECK(same.f.data == G.data);
    CHECK(same.F.data == G.data);
    CHECK(same.g.data == G.data);

    const DegradationSpec spec = default_degradation(2, 3, 8, 0.0);
    const ImageCube a = spectral_degrade(spatial_degrade(G, spec), spec.response, 3);
    const ImageCube b = spatial_degrade(spectral_degrade(G, spec.response, 3), spec);
    CHECK(testing::max_abs_diff(a.data, b.data) < 1e-6);
}

TEST_CASE("row-normalized response preserves the global mean for flat spectra") {
    Rng rng(7);
    ImageCube G(6, 6, 8);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            const float v = dist(rng);
            for (int b = 0; b < 8; ++b) G.at(y, x, b) = v;
        }
    const ImageCube F = spectral_degrade(G, default_response(3, 8), 3);
    const double mg = std::accumulate(G.data.begin(), G.data.end(), 0.0) / G.data.size();
    const double mf = std::accumulate(F.data.begin(), F.data.end(), 0.0) / F.data.size();
    CHECK(std::abs(mg - mf) < 1e-6);
}

TEST_CASE("synth_dataset is deterministic, split and clamped") {
    testing::TempDir a("synA"), b("synB");
    RunConfig cfg;
    cfg.seed = 7;
    const DatasetManifest ma = synth_dataset(a.path(), cfg);
    const DatasetManifest mb = synth_dataset(b.path(), cfg);
    CHECK(to_json(ma) == to_json(mb));
    CHECK(ma.samples.size() == 10);
    CHECK(ma.train.size() == 8);
    CHECK(ma.val.size() == 1);
    CHECK(ma.test.size() == 1);
    std::set<std::string> all(ma.train.begin(), ma.train.end());
    all.insert(ma.val.begin(), ma.val.end());
    all.insert(ma.test.begin(), ma.test.end());
    CHECK(all.size() == 10);
    for (const auto& s : ma.samples)
        for (const auto* rel : {&s.f, &s.F, &s.g, &s.G}) {
            REQUIRE(fs::exists(a.path() / *rel));
            CHECK(read_bytes(a.path() / *rel) == read_bytes(b.path() / *rel));
            const ImageCube cube = load_hsc(a.path() / *rel);
            CHECK(std::all_of(cube.data.begin(), cube.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
        }
    const auto train = load_split(a.path(), "train");
    CHECK(train.size() == 8);
    CHECK(train[0].cubes.f.height == 16);
    CHECK(train[0].cubes.G.channels == 8);
    CHECK_THROWS(load_split(a.path(), "holdout"));
}

TEST_CASE("manifest rejects overlapping splits and missing files") {
    nlohmann::json j = {{"seed", 1},
                        {"samples", {{{"id", "s0"}, {"f", "a"}, {"F", "b"}, {"g", "c"}, {"G", "d"}}}},
                        {"split", {{"train", {"s0"}}, {"val", {"s0"}}, {"test", nlohmann::json::array()}}}};
    CHECK_THROWS(manifest_from_json(j));
    testing::TempDir dir("manifest");
    j["split"]["val"] = nlohmann::json::array();
    std::ofstream(dir / "manifest.json") << j.dump();
    CHECK_THROWS(load_split(dir.path(), "train"));
}

TEST_CASE("png8 preview writer rejects bad channel counts") {
    testing::TempDir dir("png");
    write_png8(dir / "rgb.png", 2, 2, 3, std::vector<std::uint8_t>(12, 128));
    CHECK(fs::file_size(dir / "rgb.png") > 0);
    CHECK_THROWS(write_png8(dir / "bad.png", 2, 2, 2, std::vector<std::uint8_t>(8, 0)));
}

}  // TEST_SUITE

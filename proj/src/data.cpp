#include "jssu/data.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <png.h>

namespace jssu {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 32;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

void save_hsc(const ImageCube& cube, const fs::path& path) {
    if (cube.data.size() != static_cast<std::size_t>(cube.height) * cube.width * cube.channels)
        throw DimensionError("save_hsc: data length does not match dimensions");
    const bool has_wl = !cube.wavelengths.empty();
    if (has_wl && cube.wavelengths.size() != static_cast<std::size_t>(cube.channels))
        throw DimensionError("save_hsc: wavelength count does not match channels");
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(cube.height));
    put_u32(out, static_cast<std::uint32_t>(cube.width));
    put_u32(out, static_cast<std::uint32_t>(cube.channels));
    put_u32(out, has_wl ? 1u : 0u);
    for (double w : cube.wavelengths) {
        std::uint64_t bits;
        std::memcpy(&bits, &w, 8);
        put_u64(out, bits);
    }
    out.reserve(out.size() + cube.data.size() * 4);
    for (float v : cube.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
    write_file(path, out);
}

ImageCube load_hsc(const fs::path& path) {
    const std::string bytes = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4 || std::memcmp(p, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic");
    if (bytes.size() < 24) throw FormatError(path.string() + ": truncated header");
    const std::uint32_t version = get_u32(p + 4);
    if (version != kVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    const std::uint64_t h = get_u32(p + 8), w = get_u32(p + 12), c = get_u32(p + 16);
    const std::uint32_t flags = get_u32(p + 20);
    if (h == 0 || w == 0 || c == 0) throw FormatError(path.string() + ": zero dimension");
    if (h > kMaxElements / w || h * w > kMaxElements / c || h > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) ||
        w > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
        throw FormatError(path.string() + ": dimension overflow");
    const std::uint64_t n = h * w * c;
    std::size_t offset = 24;
    const bool has_wl = (flags & 1u) != 0;
    const std::uint64_t expected = offset + (has_wl ? 8 * c : 0) + 4 * n;
    if (bytes.size() != expected) throw FormatError(path.string() + ": truncated payload");
    ImageCube cube(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    if (has_wl) {
        cube.wavelengths.resize(c);
        for (std::uint64_t i = 0; i < c; ++i, offset += 8) {
            const std::uint64_t bits = get_u64(p + offset);
            std::memcpy(&cube.wavelengths[i], &bits, 8);
        }
        for (std::uint64_t i = 1; i < c; ++i)
            if (!(cube.wavelengths[i] > cube.wavelengths[i - 1]))
                throw FormatError(path.string() + ": wavelengths not strictly increasing");
    }
    for (std::uint64_t i = 0; i < n; ++i, offset += 4) {
        const std::uint32_t bits = get_u32(p + offset);
        float v;
        std::memcpy(&v, &bits, 4);
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value at element " + std::to_string(i));
        cube.data[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return cube;
}

namespace {

struct PngReadResult {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels;
};

PngReadResult read_png16_gray(const fs::path& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("libpng initialisation failed");
    }
    PngReadResult result;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError(path.string() + ": not a readable PNG");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    result.width = static_cast<int>(png_get_image_width(png, info));
    result.height = static_cast<int>(png_get_image_height(png, info));
    if (bit_depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError(path.string() + ": expected 16-bit single-channel grayscale");
    }
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * result.height);
    rows.resize(result.height);
    for (int y = 0; y < result.height; ++y) rows[y] = buffer.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    result.pixels.resize(static_cast<std::size_t>(result.width) * result.height);
    for (int y = 0; y < result.height; ++y)
        for (int x = 0; x < result.width; ++x) {
            const unsigned char* px = rows[y] + 2 * x;  // PNG stores 16-bit samples big-endian
            result.pixels[static_cast<std::size_t>(y) * result.width + x] =
                static_cast<std::uint16_t>((px[0] << 8) | px[1]);
        }
    return result;
}

void write_png_raw(const fs::path& path, int width, int height, int color_type, int bit_depth, int bytes_per_pixel,
                   const unsigned char* data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * bytes_per_pixel);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("PNG encoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

ImageCube import_band_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
    }
    if (files.empty()) throw FormatError(dir.string() + ": no PNG bands found");
    std::sort(files.begin(), files.end());
    ImageCube cube;
    for (std::size_t b = 0; b < files.size(); ++b) {
        const PngReadResult band = read_png16_gray(files[b]);
        if (b == 0) {
            cube = ImageCube(band.height, band.width, static_cast<int>(files.size()));
        } else if (band.height != cube.height || band.width != cube.width) {
            throw FormatError(files[b].string() + ": band size " + std::to_string(band.height) + "x" +
                              std::to_string(band.width) + " differs from " + std::to_string(cube.height) + "x" +
                              std::to_string(cube.width));
        }
        for (std::size_t i = 0; i < band.pixels.size(); ++i)
            cube.data[i * cube.channels + b] = static_cast<float>(band.pixels[i] / 65535.0);
    }
    return cube;
}

void write_png8(const fs::path& path, int width, int height, int channels, const std::vector<std::uint8_t>& pixels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("write_png8: channels must be 1 or 3");
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
        throw DimensionError("write_png8: pixel buffer size mismatch");
    write_png_raw(path, width, height, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, channels,
                  pixels.data());
}

void write_png16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw DimensionError("write_png16: pixel buffer size mismatch");
    std::vector<unsigned char> be(pixels.size() * 2);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        be[2 * i] = static_cast<unsigned char>(pixels[i] >> 8);
        be[2 * i + 1] = static_cast<unsigned char>(pixels[i] & 0xFF);
    }
    write_png_raw(path, width, height, PNG_COLOR_TYPE_GRAY, 16, 2, be.data());
}

void DegradationSpec::validate() const {
    if (scale < 1) throw ConfigError("degradation: scale must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0 || kernel.size() != static_cast<std::size_t>(kernel_size) * kernel_size)
        throw ConfigError("degradation: blur kernel must be odd-sized and square");
    if (response.size() != static_cast<std::size_t>(msi_bands) * hsi_bands)
        throw ConfigError("degradation: response must be c x C");
    if (noise_sigma < 0) throw ConfigError("degradation: noise_sigma must be >= 0");
    double total = 0.0;
    for (double v : kernel) {
        if (v < 0.0) throw ConfigError("degradation: blur kernel has a negative tap");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ConfigError("degradation: blur kernel must sum to 1");
    for (int i = 0; i < msi_bands; ++i) {
        double row = 0.0;
        for (int j = 0; j < hsi_bands; ++j) {
            const double v = response[static_cast<std::size_t>(i) * hsi_bands + j];
            if (v < 0.0) throw ConfigError("degradation: spectral response has a negative entry");
            row += v;
        }
        if (std::abs(row - 1.0) > 1e-6) throw ConfigError("degradation: spectral response rows must sum to 1");
    }
}

std::vector<double> gaussian_kernel(int scale) {
    const int k = 2 * scale + 1;
    const double sigma = scale / 2.0;
    std::vector<double> out(static_cast<std::size_t>(k) * k);
    double total = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            const double dy = y - scale, dx = x - scale;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            out[static_cast<std::size_t>(y) * k + x] = v;
            total += v;
        }
    for (auto& v : out) v /= total;
    return out;
}

std::vector<double> default_response(int msi_bands, int hsi_bands) {
    std::vector<double> r(static_cast<std::size_t>(msi_bands) * hsi_bands);
    const double width = std::max(1.0, hsi_bands / (1.5 * msi_bands));
    for (int i = 0; i < msi_bands; ++i) {
        const double centre = msi_bands == 1 ? (hsi_bands - 1) / 2.0 : i * (hsi_bands - 1) / double(msi_bands - 1);
        double total = 0.0;
        for (int j = 0; j < hsi_bands; ++j) {
            const double d = (j - centre) / width;
            r[static_cast<std::size_t>(i) * hsi_bands + j] = std::exp(-0.5 * d * d);
            total += r[static_cast<std::size_t>(i) * hsi_bands + j];
        }
        for (int j = 0; j < hsi_bands; ++j) r[static_cast<std::size_t>(i) * hsi_bands + j] /= total;
    }
    return r;
}

DegradationSpec default_degradation(int scale, int msi_bands, int hsi_bands, double noise_sigma) {
    DegradationSpec spec;
    spec.scale = scale;
    spec.kernel_size = 2 * scale + 1;
    spec.kernel = gaussian_kernel(scale);
    spec.msi_bands = msi_bands;
    spec.hsi_bands = hsi_bands;
    spec.response = default_response(msi_bands, hsi_bands);
    spec.noise_sigma = noise_sigma;
    return spec;
}

ImageCube spectral_degrade(const ImageCube& cube, const std::vector<double>& response, int msi_bands) {
    if (msi_bands < 1 || response.size() != static_cast<std::size_t>(msi_bands) * cube.channels)
        throw DimensionError("spectral_degrade: response is not " + std::to_string(msi_bands) + " x " +
                             std::to_string(cube.channels));
    ImageCube out(cube.height, cube.width, msi_bands);
    const std::size_t pixels = static_cast<std::size_t>(cube.height) * cube.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        const float* in = cube.data.data() + p * cube.channels;
        for (int i = 0; i < msi_bands; ++i) {
            double acc = 0.0;
            for (int j = 0; j < cube.channels; ++j) acc += response[static_cast<std::size_t>(i) * cube.channels + j] * in[j];
            out.data[p * msi_bands + i] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
    out.wavelengths.clear();
    return out;
}

ImageCube spatial_degrade(const ImageCube& cube, const DegradationSpec& spec, std::uint64_t noise_seed) {
    const int s = spec.scale;
    if (s < 1 || cube.height % s != 0 || cube.width % s != 0)
        throw DimensionError("spatial_degrade: scale " + std::to_string(s) + " does not divide " +
                             std::to_string(cube.height) + "x" + std::to_string(cube.width));
    const int k = spec.kernel_size;
    if (spec.kernel.size() != static_cast<std::size_t>(k) * k)
        throw DimensionError("spatial_degrade: kernel size mismatch");
    const int r = k / 2;
    const int h = cube.height / s, w = cube.width / s, C = cube.channels;
    ImageCube out(h, w, C);
    out.wavelengths = cube.wavelengths;
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
    std::vector<double> acc(C);
    for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < w; ++ox) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const int cy = oy * s, cx = ox * s;
            for (int ky = 0; ky < k; ++ky) {
                const int y = cy + ky - r;
                if (y < 0 || y >= cube.height) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int x = cx + kx - r;
                    if (x < 0 || x >= cube.width) continue;
                    const double wgt = spec.kernel[static_cast<std::size_t>(ky) * k + kx];
                    for (int b = 0; b < C; ++b) acc[b] += wgt * cube.at(y, x, b);
                }
            }
            for (int b = 0; b < C; ++b) {
                double v = acc[b];
                if (spec.noise_sigma > 0) v += noise(rng);
                out.at(oy, ox, b) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    return out;
}

Quadruple make_quadruple(const ImageCube& G, const DegradationSpec& spec, std::uint64_t noise_seed) {
    spec.validate();
    if (G.channels != spec.hsi_bands)
        throw DimensionError("make_quadruple: cube has " + std::to_string(G.channels) + " bands, spec expects " +
                             std::to_string(spec.hsi_bands));
    Quadruple q;
    q.G = G;
    q.F = spectral_degrade(G, spec.response, spec.msi_bands);
    q.g = spatial_degrade(G, spec, derive_seed(noise_seed, 1, 0));
    q.f = spatial_degrade(q.F, spec, derive_seed(noise_seed, 2, 0));
    return q;
}

std::vector<double> synth_endmembers(int count, int bands, std::uint64_t seed) {
    if (count < 1 || bands < 1) throw ConfigError("synth_endmembers: count and bands must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Offset plus two Gaussian bumps over the band axis, rescaled.
    std::vector<double> spectra(static_cast<std::size_t>(count) * bands);
    for (int e = 0; e < count; ++e) {
        const double base = 0.1 + 0.3 * unit(rng);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::vector<double> s(bands);
        const double m0 = unit(rng), m1 = unit(rng);
        const double a0 = 0.3 + 0.7 * unit(rng), a1 = (unit(rng) - 0.5) * 0.8;
        const double w0 = 0.1 + 0.3 * unit(rng), w1 = 0.1 + 0.3 * unit(rng);
        for (int b = 0; b < bands; ++b) {
            const double t = bands == 1 ? 0.5 : b / double(bands - 1);
            s[b] = base + a0 * std::exp(-0.5 * std::pow((t - m0) / w0, 2)) + a1 * std::exp(-0.5 * std::pow((t - m1) / w1, 2));
            lo = std::min(lo, s[b]);
            hi = std::max(hi, s[b]);
        }
        const double top = 0.4 + 0.5 * unit(rng);
        for (int b = 0; b < bands; ++b)
            spectra[static_cast<std::size_t>(e) * bands + b] =
                hi > lo ? 0.05 + (top - 0.05) * (s[b] - lo) / (hi - lo) : top;
    }
    return spectra;
}

ImageCube synth_cube(int height, int width, const std::vector<double>& spectra, int bands, int blobs,
                     std::uint64_t seed) {
    if (height < 1 || width < 1 || bands < 1 || blobs < 0 || spectra.empty() || spectra.size() % bands != 0)
        throw ConfigError("synth_cube: dimensions must be positive");
    const int endmembers = static_cast<int>(spectra.size() / bands);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto mixture = [&](std::vector<double>& out) {
        std::vector<double> a(endmembers);
        double total = 0.0;
        for (auto& v : a) total += (v = -std::log(1.0 - unit(rng)));
        out.assign(bands, 0.0);
        for (int e = 0; e < endmembers; ++e)
            for (int b = 0; b < bands; ++b) out[b] += a[e] / total * spectra[static_cast<std::size_t>(e) * bands + b];
    };

    ImageCube cube(height, width, bands);
    std::vector<double> background;
    mixture(background);
    const double bg_level = 0.3 + 0.4 * unit(rng);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int b = 0; b < bands; ++b) cube.at(y, x, b) = static_cast<float>(bg_level * background[b]);

    const double extent = std::min(height, width);
    std::vector<double> spectrum;
    for (int i = 0; i < blobs; ++i) {
        mixture(spectrum);
        const double cy = unit(rng) * height, cx = unit(rng) * width;
        const double sy = 1.0 + unit(rng) * extent / 6.0, sx = 1.0 + unit(rng) * extent / 6.0;
        const double amp = 0.3 + 0.7 * unit(rng);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double dy = (y - cy) / sy, dx = (x - cx) / sx;
                const double g = amp * std::exp(-0.5 * (dy * dy + dx * dx));
                if (g < 1e-6) continue;
                for (int b = 0; b < bands; ++b) {
                    float& v = cube.at(y, x, b);
                    v = static_cast<float>((1.0 - g) * v + g * spectrum[b]);
                }
            }
    }
    for (auto& v : cube.data) v = std::clamp(v, 0.0f, 1.0f);
    cube.wavelengths.resize(bands);
    for (int b = 0; b < bands; ++b) cube.wavelengths[b] = 400.0 + (bands == 1 ? 0.0 : 300.0 * b / (bands - 1));
    return cube;
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["samples"] = nlohmann::json::array();
    for (const auto& s : m.samples) j["samples"].push_back({{"id", s.id}, {"f", s.f}, {"F", s.F}, {"g", s.g}, {"G", s.G}});
    j["split"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
    return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("samples"))
            m.samples.push_back({s.at("id").get<std::string>(), s.at("f").get<std::string>(), s.at("F").get<std::string>(),
                                 s.at("g").get<std::string>(), s.at("G").get<std::string>()});
        const auto& split = j.at("split");
        m.train = split.at("train").get<std::vector<std::string>>();
        m.val = split.at("val").get<std::vector<std::string>>();
        m.test = split.at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    std::vector<std::string> seen;
    for (const auto* part : {&m.train, &m.val, &m.test})
        for (const auto& id : *part) {
            if (std::find(seen.begin(), seen.end(), id) != seen.end())
                throw ConfigError("manifest: sample '" + id + "' appears in more than one split");
            if (std::none_of(m.samples.begin(), m.samples.end(), [&](const ManifestSample& s) { return s.id == id; }))
                throw ConfigError("manifest: split references unknown sample '" + id + "'");
            seen.push_back(id);
        }
    return m;
}

DatasetManifest synth_dataset(const fs::path& dir, const RunConfig& config) {
    config.validate();
    const ModelConfig& mc = config.model;
    const DataConfig& dc = config.data;
    const DegradationSpec spec = default_degradation(mc.scale, mc.msi_bands, mc.hsi_bands, dc.noise_sigma);
    DatasetManifest m;
    m.seed = config.seed;
    fs::create_directories(dir);
    const std::vector<double> spectra = synth_endmembers(dc.endmembers, mc.hsi_bands, derive_seed(config.seed, 2, 0));
    for (int i = 0; i < dc.samples; ++i) {
        std::ostringstream id;
        id << "sample_" << std::setw(3) << std::setfill('0') << i;
        const ImageCube G = synth_cube(dc.height, dc.width, spectra, mc.hsi_bands, dc.blobs,
                                       derive_seed(config.seed, 0, static_cast<std::uint64_t>(i)));
        const Quadruple q = make_quadruple(G, spec, derive_seed(config.seed, 1, static_cast<std::uint64_t>(i)));
        ManifestSample rec{id.str(), id.str() + "/f.hsc", id.str() + "/F.hsc", id.str() + "/g.hsc", id.str() + "/G.hsc"};
        save_hsc(q.f, dir / rec.f);
        save_hsc(q.F, dir / rec.F);
        save_hsc(q.g, dir / rec.g);
        save_hsc(q.G, dir / rec.G);
        m.samples.push_back(rec);
        const int train_end = dc.split[0], val_end = dc.split[0] + dc.split[1];
        (i < train_end ? m.train : i < val_end ? m.val : m.test).push_back(rec.id);
    }
    write_file(dir / "manifest.json", to_json(m).dump(2) + "\n");
    return m;
}

namespace {

fs::path manifest_file(const fs::path& path) { return fs::is_directory(path) ? path / "manifest.json" : path; }

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    const fs::path file = manifest_file(path);
    if (!fs::exists(file)) throw ConfigError("manifest not found: " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("manifest " + file.string() + ": " + e.what());
    }
    DatasetManifest m = manifest_from_json(j);
    for (const auto& s : m.samples)
        for (const auto* rel : {&s.f, &s.F, &s.g, &s.G})
            if (!fs::exists(file.parent_path() / *rel))
                throw ConfigError("manifest: missing file " + (file.parent_path() / *rel).string());
    return m;
}

std::vector<LoadedSample> load_split(const fs::path& path, const std::string& split) {
    const fs::path file = manifest_file(path);
    const DatasetManifest m = load_manifest(file);
    const fs::path root = file.parent_path();
    std::vector<LoadedSample> out;
    for (const auto& id : m.split(split)) {
        const auto it = std::find_if(m.samples.begin(), m.samples.end(), [&](const ManifestSample& s) { return s.id == id; });
        LoadedSample s;
        s.id = id;
        s.cubes.f = load_hsc(root / it->f);
        s.cubes.F = load_hsc(root / it->F);
        s.cubes.g = load_hsc(root / it->g);
        s.cubes.G = load_hsc(root / it->G);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace jssu

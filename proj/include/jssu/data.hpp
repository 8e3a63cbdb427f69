#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jssu/config.hpp"
#include "jssu/tensor.hpp"

namespace jssu {

/// Malformed container or image file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense [H, W, C] float cube with optional band centres in nm.
struct ImageCube {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    std::vector<double> wavelengths;

    ImageCube() = default;
    ImageCube(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

    float& at(int y, int x, int b) { return data[(static_cast<std::size_t>(y) * width + x) * channels + b]; }
    float at(int y, int x, int b) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + b]; }

    template <typename T>
    Tensor<T> to_tensor() const {
        return Tensor<T>({height, width, channels}, std::vector<T>(data.begin(), data.end()));
    }

    template <typename T>
    static ImageCube from_tensor(const Tensor<T>& t) {
        if (t.ndim() != 3) throw DimensionError("ImageCube: expected [H,W,C], got " + shape_str(t.shape()));
        ImageCube cube(t.dim(0), t.dim(1), t.dim(2));
        for (std::size_t i = 0; i < cube.data.size(); ++i) cube.data[i] = static_cast<float>(t[i]);
        return cube;
    }
};

/// Writes the little-endian HSC container ("HSCB", version 1).
void save_hsc(const ImageCube& cube, const std::filesystem::path& path);
ImageCube load_hsc(const std::filesystem::path& path);

/// Reads every 16-bit grayscale PNG in `dir` (lexicographic order) as one band, scaled by 1/65535.
ImageCube import_band_directory(const std::filesystem::path& dir);

/// Writes an 8-bit RGB (channels = 3) or grayscale (channels = 1) PNG.
void write_png8(const std::filesystem::path& path, int width, int height, int channels,
                const std::vector<std::uint8_t>& pixels);

/// Writes a 16-bit grayscale PNG.
void write_png16(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& pixels);

struct DegradationSpec {
    int scale = 2;
    int kernel_size = 5;
    std::vector<double> kernel;    // [k * k], sums to 1
    int msi_bands = 3;
    int hsi_bands = 8;
    std::vector<double> response;  // [c * C], rows sum to 1
    double noise_sigma = 0.0;

    void validate() const;
};

/// Gaussian with std s/2 on a (2s+1)^2 support, normalized.
std::vector<double> gaussian_kernel(int scale);

/// c broad Gaussian band integrations over C evenly spaced bands, rows normalized.
std::vector<double> default_response(int msi_bands, int hsi_bands);

DegradationSpec default_degradation(int scale, int msi_bands, int hsi_bands, double noise_sigma);

/// Per-pixel R * spectrum, clamped to [0, 1].
ImageCube spectral_degrade(const ImageCube& cube, const std::vector<double>& response, int msi_bands);

/// Zero-padded blur, decimation at offset 0, Gaussian noise (seeded by `noise_seed`), clamp.
ImageCube spatial_degrade(const ImageCube& cube, const DegradationSpec& spec, std::uint64_t noise_seed = 0);

struct Quadruple {
    ImageCube f;  // LR-MSI [h, w, c]
    ImageCube F;  // HR-MSI [H, W, c]
    ImageCube g;  // LR-HSI [h, w, C]
    ImageCube G;  // HR-HSI [H, W, C]
};

Quadruple make_quadruple(const ImageCube& G, const DegradationSpec& spec, std::uint64_t noise_seed = 0);

/// `count` smooth random spectra over `bands` bands, values in [0.05, 0.9]; row-major [count * bands].
std::vector<double> synth_endmembers(int count, int bands, std::uint64_t seed);

/// Smooth random cube: Gaussian blobs whose spectra are random mixtures of the given endmembers.
ImageCube synth_cube(int height, int width, const std::vector<double>& endmembers, int bands, int blobs,
                     std::uint64_t seed);

struct ManifestSample {
    std::string id;
    std::string f, F, g, G;  // paths relative to the manifest directory
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::vector<ManifestSample> samples;
    std::vector<std::string> train, val, test;  // sample ids

    const std::vector<std::string>& split(const std::string& name) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Generates, degrades and writes `data.samples` cubes under `dir`; writes dir/manifest.json.
DatasetManifest synth_dataset(const std::filesystem::path& dir, const RunConfig& config);

struct LoadedSample {
    std::string id;
    Quadruple cubes;
};

/// Loads the manifest at dir/manifest.json (or a manifest file path) and the cubes of one split.
std::vector<LoadedSample> load_split(const std::filesystem::path& manifest_path, const std::string& split);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

}  // namespace jssu

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "jssu/data.hpp"
#include "jssu/nn.hpp"
#include "jssu/tensor.hpp"

namespace testing {

template <typename T = double>
jssu::Tensor<T> random_tensor(jssu::Rng& rng, jssu::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(jssu::numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return jssu::Tensor<T>(std::move(shape), std::move(v));
}

inline jssu::ImageCube random_cube(jssu::Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    jssu::ImageCube cube(h, w, c);
    for (auto& v : cube.data) v = static_cast<float>(dist(rng));
    return cube;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

template <typename T>
double inner(const jssu::Tensor<T>& a, const jssu::Tensor<T>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

template <typename T>
bool bit_equal(const jssu::Tensor<T>& a, const jssu::Tensor<T>& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("jssu_" + name + "_" + std::to_string(std::random_device{}()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

private:
    std::filesystem::path path_;
};

}  // namespace testing

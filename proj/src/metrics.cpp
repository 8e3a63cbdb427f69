#include "jssu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <regex>
#include <sstream>

namespace jssu {

namespace {

void check_pair(const ImageCube& x, const ImageCube& ref, const char* what) {
    if (x.height != ref.height || x.width != ref.width || x.channels != ref.channels)
        throw DimensionError(std::string(what) + ": shapes differ (" + std::to_string(x.height) + "x" +
                             std::to_string(x.width) + "x" + std::to_string(x.channels) + " vs " +
                             std::to_string(ref.height) + "x" + std::to_string(ref.width) + "x" +
                             std::to_string(ref.channels) + ")");
    if (x.data.empty()) throw DimensionError(std::string(what) + ": empty image");
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

double psnr(const ImageCube& x, const ImageCube& ref) {
    check_pair(x, ref, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = static_cast<double>(x.data[i]) - ref.data[i];
        acc += d * d;
    }
    const double mse = acc / x.data.size();
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageCube& x, const ImageCube& ref) {
    check_pair(x, ref, "ssim");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int wy = std::min(8, x.height), wx = std::min(8, x.width);
    const double n = static_cast<double>(wy) * wx;
    double band_total = 0.0;
    for (int b = 0; b < x.channels; ++b) {
        double acc = 0.0;
        int windows = 0;
        for (int y0 = 0; y0 + wy <= x.height; ++y0)
            for (int x0 = 0; x0 + wx <= x.width; ++x0) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int y = y0; y < y0 + wy; ++y)
                    for (int xx = x0; xx < x0 + wx; ++xx) {
                        const double a = x.at(y, xx, b), r = ref.at(y, xx, b);
                        sx += a;
                        sy += r;
                        sxx += a * a;
                        syy += r * r;
                        sxy += a * r;
                    }
                const double mx = sx / n, my = sy / n;
                const double vx = sxx / n - mx * mx, vy = syy / n - my * my, cxy = sxy / n - mx * my;
                acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        band_total += acc / windows;
    }
    return band_total / x.channels;
}

double sam(const ImageCube& x, const ImageCube& ref) {
    check_pair(x, ref, "sam");
    const std::size_t pixels = static_cast<std::size_t>(x.height) * x.width;
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        double dot = 0, nx = 0, nr = 0;
        for (int b = 0; b < x.channels; ++b) {
            const double a = x.data[p * x.channels + b], r = ref.data[p * x.channels + b];
            dot += a * r;
            nx += a * a;
            nr += r * r;
        }
        nx = std::sqrt(nx);
        nr = std::sqrt(nr);
        if (nx < 1e-8 || nr < 1e-8) continue;
        acc += std::acos(std::clamp(dot / (nx * nr), -1.0, 1.0));
        ++used;
    }
    return used == 0 ? 0.0 : acc / used * 180.0 / std::numbers::pi;
}

double ergas(const ImageCube& x, const ImageCube& ref, int scale, int* excluded) {
    check_pair(x, ref, "ergas");
    if (scale < 1) throw std::invalid_argument("ergas: scale must be >= 1");
    const std::size_t pixels = static_cast<std::size_t>(x.height) * x.width;
    double acc = 0.0;
    int used = 0, skipped = 0;
    for (int b = 0; b < x.channels; ++b) {
        double se = 0, mean = 0;
        bool all_zero = true;
        for (std::size_t p = 0; p < pixels; ++p) {
            const double a = x.data[p * x.channels + b], r = ref.data[p * x.channels + b];
            se += (a - r) * (a - r);
            mean += r;
            all_zero = all_zero && r == 0.0;
        }
        if (all_zero) {
            ++skipped;
            continue;
        }
        mean /= pixels;
        const double rmse = std::sqrt(se / pixels);
        acc += (rmse / mean) * (rmse / mean);
        ++used;
    }
    if (excluded) *excluded = skipped;
    if (used == 0) return 0.0;
    return 100.0 / scale * std::sqrt(acc / used);
}

MetricsRow evaluate_pair(const std::string& id, const ImageCube& x, const ImageCube& ref, int scale) {
    int excluded = 0;
    MetricsRow row{id, psnr(x, ref), ssim(x, ref), sam(x, ref), ergas(x, ref, scale, &excluded)};
    if (excluded > 0)
        std::cerr << "warning: " << id << ": " << excluded << " all-zero reference band(s) left out of ERGAS\n";
    return row;
}

MetricsRow mean_row(const std::vector<MetricsRow>& rows) {
    MetricsRow m;
    m.id = "mean";
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.psnr += r.psnr;
        m.ssim += r.ssim;
        m.sam += r.sam;
        m.ergas += r.ergas;
    }
    const double n = static_cast<double>(rows.size());
    m.psnr /= n;
    m.ssim /= n;
    m.sam /= n;
    m.ergas /= n;
    return m;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    os << "image_id,psnr,ssim,sam,ergas\n";
    auto line = [&](const MetricsRow& r) {
        os << r.id << ',' << fixed(r.psnr, 6) << ',' << fixed(r.ssim, 6) << ',' << fixed(r.sam, 6) << ','
           << fixed(r.ergas, 6) << '\n';
    };
    for (const auto& r : rows) line(r);
    line(mean_row(rows));
    return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << metrics_csv(rows);
}

std::string format_table_cell(const MetricsRow& row) {
    return fixed(row.psnr, 2) + " / " + fixed(row.ssim, 4) + " / " + fixed(row.sam, 2) + " / " + fixed(row.ergas, 2);
}

MetricsRow parse_table_cell(const std::string& cell) {
    static const std::regex pattern(
        R"(\s*([-+]?[0-9]*\.?[0-9]+)\s*/\s*([-+]?[0-9]*\.?[0-9]+)\s*/\s*([-+]?[0-9]*\.?[0-9]+)\s*/\s*([-+]?[0-9]*\.?[0-9]+)\s*)");
    std::smatch m;
    if (!std::regex_match(cell, m, pattern)) throw std::invalid_argument("unparseable metrics cell: '" + cell + "'");
    MetricsRow row;
    row.psnr = std::stod(m[1]);
    row.ssim = std::stod(m[2]);
    row.sam = std::stod(m[3]);
    row.ergas = std::stod(m[4]);
    return row;
}

}  // namespace jssu

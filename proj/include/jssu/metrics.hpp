#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jssu/data.hpp"

namespace jssu {

/// 10 log10(1 / MSE) over all entries; 100 dB when MSE < 1e-10.
double psnr(const ImageCube& x, const ImageCube& ref);

/// Band-averaged SSIM with a uniform 8x8 window (clipped to the image), stride 1, K1 = 0.01, K2 = 0.03, L = 1.
double ssim(const ImageCube& x, const ImageCube& ref);

/// Mean spectral angle in degrees; pixels where either spectrum norm is below 1e-8 are skipped.
double sam(const ImageCube& x, const ImageCube& ref);

/// 100 / s * sqrt(mean_i (RMSE_i / mu_i)^2). Reference bands that are all zero are left out;
/// their count is written to `excluded` when given.
double ergas(const ImageCube& x, const ImageCube& ref, int scale, int* excluded = nullptr);

struct MetricsRow {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double sam = 0.0;
    double ergas = 0.0;
};

MetricsRow evaluate_pair(const std::string& id, const ImageCube& x, const ImageCube& ref, int scale);

/// Column-wise mean, id "mean".
MetricsRow mean_row(const std::vector<MetricsRow>& rows);

/// "image_id,psnr,ssim,sam,ergas" rows followed by the mean row.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// "PSNR / SSIM / SAM / ERGAS" table cell, e.g. "37.40 / 0.9427 / 8.96 / 8.28".
std::string format_table_cell(const MetricsRow& row);
MetricsRow parse_table_cell(const std::string& cell);

}  // namespace jssu

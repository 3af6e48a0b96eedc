// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace omnistereo {

/// Per-cell absolute index error against ground truth, in raw sphere-index
/// units. Cells without a usable prediction are excluded from the metrics.
struct ErrorRaster {
  int height = 0;
  int width = 0;
  int num_spheres = 0;
  std::vector<float> abs_diff;
  std::vector<std::uint8_t> evaluated;
};

ErrorRaster index_error(const std::vector<float>& pred,
                        const std::vector<std::uint8_t>& pred_valid,
                        const std::vector<float>& gt, int height, int width,
                        int num_spheres);

/// Error-rate percentages use raw-index thresholds; mae/rms come in raw index
/// units and as a percentage of the sphere count.
struct MetricReport {
  double gt1 = 0.0;  // percent of evaluated cells with error > 1
  double gt3 = 0.0;
  double gt5 = 0.0;
  double mae = 0.0;
  double rms = 0.0;
  double mae_pct = 0.0;
  double rms_pct = 0.0;
  std::int64_t evaluated = 0;
  std::int64_t ignored = 0;
};

MetricReport summarize(const ErrorRaster& err);

/// Pooled metrics over several rasters (cells weighted equally).
MetricReport summarize(const std::vector<ErrorRaster>& errs);

using NamedReports = std::vector<std::pair<std::string, MetricReport>>;

/// Fixed-width table, one row per method.
std::string report_text(const NamedReports& reports);

void write_report_json(const std::string& path, const NamedReports& reports);

/// Blue (= lo) to red (= hi) colormap; cells with valid == 0 are black.
/// `valid` may be empty, meaning all cells are valid.
void write_colormap_ppm(const std::string& path,
                        const std::vector<float>& values,
                        const std::vector<std::uint8_t>& valid, int height,
                        int width, float lo, float hi);

}  // namespace omnistereo

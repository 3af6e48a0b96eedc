// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "omnistereo/io.hpp"

namespace omnistereo {

ErrorRaster index_error(const std::vector<float>& pred,
                        const std::vector<std::uint8_t>& pred_valid,
                        const std::vector<float>& gt, int height, int width,
                        int num_spheres) {
  const std::size_t cells = static_cast<std::size_t>(height) * width;
  if (pred.size() != cells || gt.size() != cells)
    throw std::invalid_argument("index_error: raster size mismatch");
  if (!pred_valid.empty() && pred_valid.size() != cells)
    throw std::invalid_argument("index_error: validity size mismatch");
  ErrorRaster out;
  out.height = height;
  out.width = width;
  out.num_spheres = num_spheres;
  out.abs_diff.assign(cells, 0.0f);
  out.evaluated.assign(cells, 0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (!pred_valid.empty() && !pred_valid[i]) continue;
    if (!std::isfinite(pred[i]) || !std::isfinite(gt[i]))
      throw std::invalid_argument("index_error: non-finite index value");
    out.abs_diff[i] = std::abs(pred[i] - gt[i]);
    out.evaluated[i] = 1;
  }
  return out;
}

MetricReport summarize(const ErrorRaster& err) {
  return summarize(std::vector<ErrorRaster>{err});
}

MetricReport summarize(const std::vector<ErrorRaster>& errs) {
  if (errs.empty()) throw std::invalid_argument("summarize: no rasters");
  const int n = errs[0].num_spheres;
  MetricReport rep;
  double sum = 0.0, sum_sq = 0.0;
  std::int64_t over1 = 0, over3 = 0, over5 = 0;
  for (const auto& err : errs) {
    if (err.num_spheres != n)
      throw std::invalid_argument("summarize: sphere count mismatch");
    for (std::size_t i = 0; i < err.abs_diff.size(); ++i) {
      if (!err.evaluated[i]) {
        ++rep.ignored;
        continue;
      }
      const double d = err.abs_diff[i];
      sum += d;
      sum_sq += d * d;
      if (d > 1.0) ++over1;
      if (d > 3.0) ++over3;
      if (d > 5.0) ++over5;
      ++rep.evaluated;
    }
  }
  if (rep.evaluated > 0) {
    const double inv = 1.0 / static_cast<double>(rep.evaluated);
    rep.gt1 = 100.0 * over1 * inv;
    rep.gt3 = 100.0 * over3 * inv;
    rep.gt5 = 100.0 * over5 * inv;
    rep.mae = sum * inv;
    rep.rms = std::sqrt(sum_sq * inv);
    rep.mae_pct = rep.mae / n * 100.0;
    rep.rms_pct = rep.rms / n * 100.0;
  }
  return rep;
}

std::string report_text(const NamedReports& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %7s %7s %7s %8s %8s %8s %8s %9s %9s\n",
                "method", ">1 %", ">3 %", ">5 %", "MAE", "RMS", "MAE %",
                "RMS %", "cells", "ignored");
  out += line;
  for (const auto& [name, r] : reports) {
    std::snprintf(line, sizeof(line),
                  "%-12s %7.3f %7.3f %7.3f %8.4f %8.4f %8.4f %8.4f %9lld %9lld\n",
                  name.c_str(), r.gt1, r.gt3, r.gt5, r.mae, r.rms, r.mae_pct,
                  r.rms_pct, static_cast<long long>(r.evaluated),
                  static_cast<long long>(r.ignored));
    out += line;
  }
  return out;
}

void write_report_json(const std::string& path, const NamedReports& reports) {
  nlohmann::json doc;
  for (const auto& [name, r] : reports) {
    doc[name] = {{"gt1_pct", r.gt1},     {"gt3_pct", r.gt3},
                 {"gt5_pct", r.gt5},     {"mae", r.mae},
                 {"rms", r.rms},         {"mae_pct", r.mae_pct},
                 {"rms_pct", r.rms_pct}, {"evaluated", r.evaluated},
                 {"ignored", r.ignored}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report_json: cannot write " + path);
  out << doc.dump(2) << "\n";
}

void write_colormap_ppm(const std::string& path,
                        const std::vector<float>& values,
                        const std::vector<std::uint8_t>& valid, int height,
                        int width, float lo, float hi) {
  const std::size_t cells = static_cast<std::size_t>(height) * width;
  if (values.size() != cells)
    throw std::invalid_argument("write_colormap_ppm: raster size mismatch");
  if (!valid.empty() && valid.size() != cells)
    throw std::invalid_argument("write_colormap_ppm: validity size mismatch");
  if (!(hi > lo))
    throw std::invalid_argument("write_colormap_ppm: empty value range");
  std::vector<std::uint8_t> rgb(cells * 3, 0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (!valid.empty() && !valid[i]) continue;
    const float t = std::clamp((values[i] - lo) / (hi - lo), 0.0f, 1.0f);
    rgb[i * 3 + 0] = static_cast<std::uint8_t>(std::lround(255.0f * t));
    rgb[i * 3 + 1] = 0;
    rgb[i * 3 + 2] = static_cast<std::uint8_t>(std::lround(255.0f * (1.0f - t)));
  }
  write_ppm(path, height, width, rgb);
}

}  // namespace omnistereo

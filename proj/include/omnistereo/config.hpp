// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "omnistereo/geometry.hpp"

namespace omnistereo {

/// Calibration file: cameras plus an optional sweep-grid block. Angles are
/// stored in degrees. Unknown fields are rejected.
struct RigFile {
  Rig rig;
  std::optional<SweepGrid> grid;
};

RigFile load_rig_file(const std::string& path);

void save_rig_file(const std::string& path, const Rig& rig,
                   const SweepGrid* grid = nullptr);

}  // namespace omnistereo

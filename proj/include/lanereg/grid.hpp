#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace lanereg {

/// Lane grid geometry. Grid k of a lane covers [k*dx, (k+1)*dx), i.e. it is centred at
/// x_k = (k + 1/2) dx. Grid indices are 0-based, lanes 1-based (1 = rightmost).
struct GridSpec {
  double grid_length = 100.0;  // dx, m
  int n_grids = 10;            // N_x
  int n_lanes = 5;             // m

  /// Spec covering a road of `road_length` exactly; throws ConfigError if dx does not divide L.
  static GridSpec for_road(double road_length, int lanes, double grid_length = 100.0);

  double road_length() const { return grid_length * n_grids; }
  std::size_t cell_count() const { return static_cast<std::size_t>(n_grids) * static_cast<std::size_t>(n_lanes); }
  /// Row-major cell index, lane-major.
  std::size_t cell(int lane, int grid) const {
    return static_cast<std::size_t>(lane - 1) * static_cast<std::size_t>(n_grids) + static_cast<std::size_t>(grid);
  }
  /// Grid containing position x; x == L maps into the last grid.
  int grid_of(double x) const {
    const int k = static_cast<int>(std::floor(x / grid_length));
    return std::clamp(k, 0, n_grids - 1);
  }
  double centre(int grid) const { return (grid + 0.5) * grid_length; }
};

}  // namespace lanereg

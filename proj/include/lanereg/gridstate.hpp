#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "lanereg/grid.hpp"

namespace lanereg {

/// Macroscopic state of one lane grid.
struct GridState {
  double density = 0.0;     // veh/m
  double cv_density = 0.0;  // veh/m, connected vehicles only
  double speed = 0.0;       // m/s, mean over the grid's vehicles
  double cv_speed = 0.0;    // m/s, mean over the grid's connected vehicles
};

/// Minimal vehicle view needed for aggregation.
struct PointVehicle {
  int lane = 1;
  double x = 0.0;
  double v = 0.0;
  bool is_cv = false;
};

/// GridState per (lane, grid) cell, lane-major.
class GridField {
 public:
  GridField() = default;
  explicit GridField(const GridSpec& spec) : spec_(spec), cells_(spec.cell_count()) {}

  const GridSpec& spec() const { return spec_; }
  GridState& at(int lane, int grid) { return cells_[spec_.cell(lane, grid)]; }
  const GridState& at(int lane, int grid) const { return cells_[spec_.cell(lane, grid)]; }
  std::vector<GridState>& cells() { return cells_; }
  const std::vector<GridState>& cells() const { return cells_; }

 private:
  GridSpec spec_{};
  std::vector<GridState> cells_;
};

/// Counts vehicles per grid of their current lane. Empty grids (and grids without CVs, for
/// the CV speed) report `free_speed`, so speed features are always defined.
GridField aggregate(std::span<const PointVehicle> vehicles, const GridSpec& spec, double free_speed);

/// Aggregation straight from any vehicle container exposing lane, x, v and is_cv.
template <class Range>
GridField aggregate_vehicles(const Range& vehicles, const GridSpec& spec, double free_speed) {
  std::vector<PointVehicle> pts;
  pts.reserve(std::size(vehicles));
  for (const auto& v : vehicles) pts.push_back({v.lane, v.x, v.v, v.is_cv});
  return aggregate(pts, spec, free_speed);
}

/// Normalisation constants of the observation features.
struct ObservationScale {
  double max_density = 0.133;  // veh/(lane m)
  double max_speed = 24.59;    // m/s
};

inline constexpr int kObservedLanes = 3;    // right neighbour, own lane, left neighbour
inline constexpr int kObservedGrids = 5;    // two grids up- and downstream
inline constexpr int kGridFeatures = 4;     // density, CV density, speed, CV speed
inline constexpr int kWindowCells = kObservedLanes * kObservedGrids;
inline constexpr int kObservationSize = kWindowCells * kGridFeatures + kWindowCells;

/// Local window of agent (lane, grid): features of cell (lane - 1 + r, grid - 2 + c) at
/// offset ((r * 5 + c) * 4 + f), then one mask value per cell (1 = off the road, features 0).
using Observation = std::array<float, kObservationSize>;

void observe_into(const GridField& field, int lane, int grid, const ObservationScale& scale, float* out);

/// Normalised features of every cell (cell order, 4 per cell), the compact form replay stores.
void normalize_field(const GridField& field, const ObservationScale& scale, float* out);
/// Same window as observe_into, cut from a normalize_field buffer.
void observe_window(const float* features, const GridSpec& spec, int lane, int grid, float* out);
Observation observe(const GridField& field, int lane, int grid, const ObservationScale& scale = {});

/// Observations of every agent, agent-major in cell order (lane-major), n_agents x kObservationSize.
void observe_all(const GridField& field, const ObservationScale& scale, std::vector<float>& out);

/// Appends rows t,lane,grid,rho,rho_c,v,v_c. `header` writes the column line first.
void write_grid_csv(std::ostream& os, double t, const GridField& field, bool header);

}  // namespace lanereg

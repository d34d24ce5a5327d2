#include "lanereg/gridstate.hpp"

#include <algorithm>
#include <ostream>

namespace lanereg {

GridField aggregate(std::span<const PointVehicle> vehicles, const GridSpec& spec, double free_speed) {
  GridField field(spec);
  std::vector<int> count(spec.cell_count(), 0);
  std::vector<int> cv_count(spec.cell_count(), 0);
  for (const auto& v : vehicles) {
    const auto c = spec.cell(v.lane, spec.grid_of(v.x));
    auto& s = field.cells()[c];
    ++count[c];
    s.speed += v.v;
    if (v.is_cv) {
      ++cv_count[c];
      s.cv_speed += v.v;
    }
  }
  for (std::size_t c = 0; c < field.cells().size(); ++c) {
    auto& s = field.cells()[c];
    s.density = count[c] / spec.grid_length;
    s.cv_density = cv_count[c] / spec.grid_length;
    s.speed = count[c] > 0 ? s.speed / count[c] : free_speed;
    s.cv_speed = cv_count[c] > 0 ? s.cv_speed / cv_count[c] : free_speed;
  }
  return field;
}

void observe_into(const GridField& field, int lane, int grid, const ObservationScale& scale, float* out) {
  const auto& spec = field.spec();
  const auto unit = [](double x) { return static_cast<float>(std::clamp(x, 0.0, 1.0)); };
  float* mask = out + kWindowCells * kGridFeatures;
  for (int r = 0; r < kObservedLanes; ++r) {
    const int l = lane - 1 + r;
    for (int c = 0; c < kObservedGrids; ++c) {
      const int g = grid - 2 + c;
      const int cell = r * kObservedGrids + c;
      float* f = out + cell * kGridFeatures;
      if (l < 1 || l > spec.n_lanes || g < 0 || g >= spec.n_grids) {
        std::fill(f, f + kGridFeatures, 0.0f);
        mask[cell] = 1.0f;
        continue;
      }
      const auto& s = field.at(l, g);
      f[0] = unit(s.density / scale.max_density);
      f[1] = unit(s.cv_density / scale.max_density);
      f[2] = unit(s.speed / scale.max_speed);
      f[3] = unit(s.cv_speed / scale.max_speed);
      mask[cell] = 0.0f;
    }
  }
}

void normalize_field(const GridField& field, const ObservationScale& scale, float* out) {
  const auto unit = [](double x) { return static_cast<float>(std::clamp(x, 0.0, 1.0)); };
  for (const auto& s : field.cells()) {
    *out++ = unit(s.density / scale.max_density);
    *out++ = unit(s.cv_density / scale.max_density);
    *out++ = unit(s.speed / scale.max_speed);
    *out++ = unit(s.cv_speed / scale.max_speed);
  }
}

void observe_window(const float* features, const GridSpec& spec, int lane, int grid, float* out) {
  float* mask = out + kWindowCells * kGridFeatures;
  for (int r = 0; r < kObservedLanes; ++r) {
    const int l = lane - 1 + r;
    for (int c = 0; c < kObservedGrids; ++c) {
      const int g = grid - 2 + c;
      const int cell = r * kObservedGrids + c;
      float* f = out + cell * kGridFeatures;
      if (l < 1 || l > spec.n_lanes || g < 0 || g >= spec.n_grids) {
        std::fill(f, f + kGridFeatures, 0.0f);
        mask[cell] = 1.0f;
        continue;
      }
      std::copy_n(features + spec.cell(l, g) * kGridFeatures, kGridFeatures, f);
      mask[cell] = 0.0f;
    }
  }
}

Observation observe(const GridField& field, int lane, int grid, const ObservationScale& scale) {
  Observation obs{};
  observe_into(field, lane, grid, scale, obs.data());
  return obs;
}

void observe_all(const GridField& field, const ObservationScale& scale, std::vector<float>& out) {
  const auto& spec = field.spec();
  out.resize(spec.cell_count() * kObservationSize);
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int g = 0; g < spec.n_grids; ++g) {
      observe_into(field, lane, g, scale, out.data() + spec.cell(lane, g) * kObservationSize);
    }
  }
}

void write_grid_csv(std::ostream& os, double t, const GridField& field, bool header) {
  if (header) os << "t,lane,grid,rho,rho_c,v,v_c\n";
  const auto& spec = field.spec();
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int g = 0; g < spec.n_grids; ++g) {
      const auto& s = field.at(lane, g);
      os << t << ',' << lane << ',' << g << ',' << s.density << ',' << s.cv_density << ',' << s.speed << ','
         << s.cv_speed << '\n';
    }
  }
}

}  // namespace lanereg

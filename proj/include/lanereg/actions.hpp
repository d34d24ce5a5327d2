#pragma once

#include <cstdint>
#include <vector>

#include "lanereg/grid.hpp"

namespace lanereg {

/// Lane-change permission broadcast to the connected vehicles of one lane grid.
struct GridAction {
  bool allow_left = true;
  bool allow_right = true;

  /// Joint index 2*allow_left + allow_right in {0, 1, 2, 3}.
  int index() const { return 2 * static_cast<int>(allow_left) + static_cast<int>(allow_right); }
  static GridAction from_index(int index) { return {(index & 2) != 0, (index & 1) != 0}; }
  bool operator==(const GridAction&) const = default;
};

inline constexpr int kJointActions = 4;

/// One GridAction per (lane, grid) cell.
class ActionField {
 public:
  ActionField() = default;
  ActionField(const GridSpec& spec, GridAction fill) : spec_(spec), cells_(spec.cell_count(), fill) {}

  static ActionField allow_all(const GridSpec& spec) { return {spec, GridAction{true, true}}; }
  static ActionField deny_all(const GridSpec& spec) { return {spec, GridAction{false, false}}; }

  const GridSpec& spec() const { return spec_; }
  GridAction& at(int lane, int grid) { return cells_[spec_.cell(lane, grid)]; }
  const GridAction& at(int lane, int grid) const { return cells_[spec_.cell(lane, grid)]; }
  std::vector<GridAction>& cells() { return cells_; }
  const std::vector<GridAction>& cells() const { return cells_; }

 private:
  GridSpec spec_{};
  std::vector<GridAction> cells_;
};

}  // namespace lanereg

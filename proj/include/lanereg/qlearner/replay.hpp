#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <vector>

#include "lanereg/common.hpp"
#include "lanereg/grid.hpp"

namespace lanereg::qlearner {

/// One global transition: the whole field before and after a joint action of every agent.
/// States are stored compactly (normalised cell features) and expanded into per-agent
/// observations only when a batch is built.
struct Transition {
  std::vector<float> state;
  std::vector<std::uint8_t> actions;  // per agent, joint-action index
  std::vector<float> rewards;         // per agent
  std::vector<float> next_state;
  bool terminal = false;
};

/// Maps a stored global state to the observation of every agent.
class ObservationMap {
 public:
  virtual ~ObservationMap() = default;
  virtual int agents() const = 0;
  virtual int observation_size() const = 0;
  /// Writes agents() * observation_size() floats, agent-major.
  virtual void expand(const float* state, float* out) const = 0;
};

/// Lane-grid agents seeing the 3 x 5 window around their cell (state = cell features).
class WindowObservations final : public ObservationMap {
 public:
  explicit WindowObservations(const GridSpec& spec) : spec_(spec) {}
  int agents() const override { return static_cast<int>(spec_.cell_count()); }
  int observation_size() const override;
  void expand(const float* state, float* out) const override;

 private:
  GridSpec spec_;
};

/// A single agent whose state is its observation (toy problems).
class IdentityObservations final : public ObservationMap {
 public:
  explicit IdentityObservations(int size) : size_(size) {}
  int agents() const override { return 1; }
  int observation_size() const override { return size_; }
  void expand(const float* state, float* out) const override;

 private:
  int size_;
};

/// Fixed-capacity FIFO of global transitions with uniform sampling. Appends and samples
/// are serialised by an internal mutex so several collectors may feed one learner.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  /// Drops the `count` most recently pushed transitions (a faulted episode).
  void pop_recent(std::size_t count);
  /// `n` transitions drawn uniformly with replacement. Requires size() > 0.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  /// Oldest-first view for tests.
  std::vector<Transition> contents() const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  mutable std::mutex mu_;
};

}  // namespace lanereg::qlearner

#include "lanereg/qlearner/replay.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "lanereg/gridstate.hpp"

namespace lanereg::qlearner {

int WindowObservations::observation_size() const { return kObservationSize; }

void WindowObservations::expand(const float* state, float* out) const {
  for (int lane = 1; lane <= spec_.n_lanes; ++lane) {
    for (int grid = 0; grid < spec_.n_grids; ++grid) {
      observe_window(state, spec_, lane, grid, out + spec_.cell(lane, grid) * kObservationSize);
    }
  }
}

void IdentityObservations::expand(const float* state, float* out) const {
  std::memcpy(out, state, sizeof(float) * static_cast<std::size_t>(size_));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  data_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
  std::lock_guard lock(mu_);
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayBuffer::pop_recent(std::size_t count) {
  std::lock_guard lock(mu_);
  count = std::min(count, size_);
  for (std::size_t i = 0; i < count; ++i) {
    head_ = (head_ + capacity_ - 1) % capacity_;
    data_[head_] = Transition{};
  }
  size_ -= count;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::lock_guard lock(mu_);
  if (size_ == 0) throw std::logic_error("sampling an empty replay buffer");
  const std::size_t oldest = (head_ + capacity_ - size_) % capacity_;
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(uniform_index(rng, size_));
    out.push_back(data_[(oldest + k) % capacity_]);
  }
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return size_;
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::lock_guard lock(mu_);
  std::vector<Transition> out;
  const std::size_t oldest = (head_ + capacity_ - size_) % capacity_;
  for (std::size_t k = 0; k < size_; ++k) out.push_back(data_[(oldest + k) % capacity_]);
  return out;
}

}  // namespace lanereg::qlearner

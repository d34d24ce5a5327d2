#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "lanereg/common.hpp"
#include "lanereg/qlearner/mlp.hpp"
#include "lanereg/qlearner/replay.hpp"

namespace lanereg::qlearner {

using Net = Mlp<float>;

/// Per-agent tuples of a flattened global batch; observations are columns.
struct AgentBatch {
  Net::Matrix obs;
  Net::Matrix next_obs;
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> terminal;

  Eigen::Index size() const { return obs.cols(); }
};

/// Expands |B| global transitions into |B| * agents per-agent tuples.
AgentBatch flatten(const std::vector<Transition>& batch, const ObservationMap& map);

/// Greedy action with ties broken towards the lowest index.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& q) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(q.size()); ++a) {
    if (q(a) > q(best)) best = a;
  }
  return best;
}

/// Mean squared TD error over the batch and its gradient with respect to the network
/// parameters. `targets` are held fixed.
template <typename Scalar>
double td_loss(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& obs, const std::vector<int>& actions,
               const std::vector<Scalar>& targets, std::type_identity_t<ParamVector<Scalar>>* grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  typename Mlp<Scalar>::Tape tape;
  const Matrix q = net.forward(obs, tape);
  const Eigen::Index n = obs.cols();
  Matrix dq = Matrix::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(i)]);
    const double err = static_cast<double>(q(a, i)) - static_cast<double>(targets[static_cast<std::size_t>(i)]);
    loss += err * err;
    dq(a, i) = static_cast<Scalar>(2.0 * err / static_cast<double>(n));
  }
  if (grad) net.backward(tape, dq, *grad);
  return loss / static_cast<double>(n);
}

/// Raised when a gradient step produces a non-finite loss. The message names the dump file
/// (parameters and offending batch) when one could be written.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DqnParams {
  std::vector<int> layers{75, 128, 128, 4};
  double gamma = 0.95;
  double learning_rate = 1e-4;

  void validate() const;
};

/// Shared-parameter Double DQN: one online network acting for every agent and a target
/// network refreshed by hard copies.
class DoubleDqn {
 public:
  DoubleDqn(const DqnParams& params, std::uint64_t init_seed);

  /// Per agent: a uniform joint action with probability epsilon, else the greedy one.
  /// `obs` holds `agents` observations, agent-major.
  std::vector<int> select_actions(const float* obs, int agents, double epsilon, Rng& rng) const;
  std::vector<int> greedy_actions(const float* obs, int agents) const;

  /// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)), or r for terminal tuples.
  std::vector<float> targets(const AgentBatch& batch) const;

  /// One gradient step on the batch; returns the loss before the step.
  double train_step(const AgentBatch& batch);

  void sync_target() { target_.copy_from(online_); }
  /// Hard copy when `step` is a multiple of `period`. Returns true if it copied.
  bool maybe_sync(long long step, long long period);

  Net& online() { return online_; }
  const Net& online() const { return online_; }
  Net& target() { return target_; }
  const Net& target() const { return target_; }
  const DqnParams& params() const { return params_; }
  long long train_steps() const { return train_steps_; }
  void set_dump_path(std::filesystem::path p) { dump_path_ = std::move(p); }

 private:
  DqnParams params_;
  Net online_;
  Net target_;
  Adam<float> adam_;
  long long train_steps_ = 0;
  std::filesystem::path dump_path_;
  ParamVector<float> grad_;
};

/// Versioned binary weight file.
struct Checkpoint {
  long long env_step = 0;
  std::uint64_t config_hash = 0;
  std::vector<int> layers;
  std::vector<float> parameters;
};

void save_checkpoint(const std::filesystem::path& path, const Net& net, long long env_step, std::uint64_t config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Network restored from a checkpoint.
Net network_from(const Checkpoint& ckpt);

}  // namespace lanereg::qlearner

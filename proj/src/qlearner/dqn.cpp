#include "lanereg/qlearner/dqn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace lanereg::qlearner {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'Q', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

Net::Matrix as_columns(const float* obs, int rows, int cols) {
  return Eigen::Map<const Net::Matrix>(obs, rows, cols);
}

}  // namespace

AgentBatch flatten(const std::vector<Transition>& batch, const ObservationMap& map) {
  const int agents = map.agents();
  const int dim = map.observation_size();
  const auto n = static_cast<Eigen::Index>(batch.size()) * agents;
  AgentBatch out;
  out.obs.resize(dim, n);
  out.next_obs.resize(dim, n);
  out.actions.reserve(static_cast<std::size_t>(n));
  out.rewards.reserve(static_cast<std::size_t>(n));
  out.terminal.reserve(static_cast<std::size_t>(n));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = batch[b];
    if (static_cast<int>(t.actions.size()) != agents || static_cast<int>(t.rewards.size()) != agents) {
      throw std::invalid_argument("transition agent count does not match the observation map");
    }
    const auto col = static_cast<Eigen::Index>(b) * agents;
    map.expand(t.state.data(), out.obs.data() + col * dim);
    map.expand(t.next_state.data(), out.next_obs.data() + col * dim);
    for (int a = 0; a < agents; ++a) {
      out.actions.push_back(t.actions[static_cast<std::size_t>(a)]);
      out.rewards.push_back(t.rewards[static_cast<std::size_t>(a)]);
      out.terminal.push_back(t.terminal ? 1 : 0);
    }
  }
  return out;
}

void DqnParams::validate() const {
  if (layers.size() < 2) throw ConfigError("network needs at least two layers");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

DoubleDqn::DoubleDqn(const DqnParams& params, std::uint64_t init_seed)
    : params_(params), online_(params.layers), target_(params.layers), adam_(online_.parameter_count(), params.learning_rate) {
  params_.validate();
  Rng rng = make_stream(init_seed, 12);
  online_.init(rng);
  sync_target();
}

std::vector<int> DoubleDqn::greedy_actions(const float* obs, int agents) const {
  const Net::Matrix q = online_.forward(as_columns(obs, online_.input_size(), agents));
  std::vector<int> out(static_cast<std::size_t>(agents));
  for (int i = 0; i < agents; ++i) out[static_cast<std::size_t>(i)] = argmax_lowest(q.col(i));
  return out;
}

std::vector<int> DoubleDqn::select_actions(const float* obs, int agents, double epsilon, Rng& rng) const {
  std::vector<int> out = greedy_actions(obs, agents);
  const auto n_actions = static_cast<std::uint64_t>(online_.output_size());
  // Both draws are taken for every agent so the stream does not depend on the network.
  for (int& a : out) {
    const bool explore = bernoulli(rng, epsilon);
    const auto random_action = static_cast<int>(uniform_index(rng, n_actions));
    if (explore) a = random_action;
  }
  return out;
}

std::vector<float> DoubleDqn::targets(const AgentBatch& batch) const {
  const Net::Matrix q_online = online_.forward(batch.next_obs);
  const Net::Matrix q_target = target_.forward(batch.next_obs);
  std::vector<float> y(static_cast<std::size_t>(batch.size()));
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    y[k] = batch.rewards[k];
    if (!batch.terminal[k]) {
      const int a = argmax_lowest(q_online.col(i));
      y[k] += static_cast<float>(params_.gamma) * q_target(a, i);
    }
  }
  return y;
}

double DoubleDqn::train_step(const AgentBatch& batch) {
  const std::vector<float> y = targets(batch);
  const double loss = td_loss(online_, batch.obs, batch.actions, y, &grad_);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at train step " << train_steps_;
    if (!dump_path_.empty()) {
      std::ofstream os(dump_path_);
      os << "train_step " << train_steps_ << "\nparameters";
      for (float p : online_.parameters()) os << ' ' << p;
      os << "\nobs " << batch.obs.rows() << 'x' << batch.obs.cols() << "\n" << batch.obs.transpose() << "\nactions";
      for (int a : batch.actions) os << ' ' << a;
      os << "\ntargets";
      for (float v : y) os << ' ' << v;
      os << '\n';
      msg << "; dump written to " << dump_path_.string();
    }
    throw NonFiniteLoss(msg.str());
  }
  adam_.step(online_.parameters(), grad_);
  ++train_steps_;
  return loss;
}

bool DoubleDqn::maybe_sync(long long step, long long period) {
  if (period <= 0 || step % period != 0) return false;
  sync_target();
  return true;
}

void save_checkpoint(const std::filesystem::path& path, const Net& net, long long env_step, std::uint64_t config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::int64_t>(env_step));
  put(os, config_hash);
  put(os, static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) put(os, static_cast<std::int32_t>(s));
  put(os, static_cast<std::uint64_t>(net.parameter_count()));
  os.write(reinterpret_cast<const char*>(net.parameters().data()),
           static_cast<std::streamsize>(sizeof(float) * net.parameter_count()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4)) throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.env_step = get<std::int64_t>(is);
  ck.config_hash = get<std::uint64_t>(is);
  const auto n_layers = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_layers; ++i) ck.layers.push_back(get<std::int32_t>(is));
  const auto n_params = get<std::uint64_t>(is);
  ck.parameters.resize(n_params);
  is.read(reinterpret_cast<char*>(ck.parameters.data()), static_cast<std::streamsize>(sizeof(float) * n_params));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return ck;
}

Net network_from(const Checkpoint& ckpt) {
  Net net(ckpt.layers);
  if (net.parameter_count() != ckpt.parameters.size()) throw std::runtime_error("checkpoint size does not match its layers");
  net.parameters().assign(ckpt.parameters.begin(), ckpt.parameters.end());
  return net;
}

}  // namespace lanereg::qlearner

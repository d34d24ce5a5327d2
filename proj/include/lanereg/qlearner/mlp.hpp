#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lanereg/common.hpp"

namespace lanereg::qlearner {

/// Fully connected ReLU network with a linear output layer. All weights and biases live in
/// one flat vector so copies, optimiser updates and checkpoints are plain array operations.
/// Layer l stores W (out x in, column-major) followed by b (out).
/// Flat parameter storage. Eigen's kernels round differently depending on buffer alignment,
/// so a fixed alignment keeps results reproducible across runs.
template <typename Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatMap = Eigen::Map<Matrix>;
  using ConstMatMap = Eigen::Map<const Matrix>;
  using VecMap = Eigen::Map<Vector>;
  using ConstVecMap = Eigen::Map<const Vector>;

  /// Activations kept by a training forward pass; activations[0] is the input.
  struct Tape {
    std::vector<Matrix> activations;
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ConfigError("layer sizes must be positive");
      offsets_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l + 1]) * (static_cast<std::size_t>(sizes_[l]) + 1);
    }
    params_.assign(n, Scalar(0));
  }

  /// He-uniform weights, zero biases.
  void init(Rng& rng) {
    for (int l = 0; l < layers(); ++l) {
      const double bound = std::sqrt(6.0 / sizes_[static_cast<std::size_t>(l)]);
      auto w = weight(l);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(uniform(rng, -bound, bound));
      bias(l).setZero();
    }
  }

  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t parameter_count() const { return params_.size(); }
  ParamVector<Scalar>& parameters() { return params_; }
  const ParamVector<Scalar>& parameters() const { return params_; }

  MatMap weight(int l) { return MatMap(params_.data() + offsets_[l], out(l), in(l)); }
  ConstMatMap weight(int l) const { return ConstMatMap(params_.data() + offsets_[l], out(l), in(l)); }
  VecMap bias(int l) { return VecMap(params_.data() + offsets_[l] + out(l) * in(l), out(l)); }
  ConstVecMap bias(int l) const { return ConstVecMap(params_.data() + offsets_[l] + out(l) * in(l), out(l)); }

  /// Outputs for a batch given as columns (input_size x N).
  Matrix forward(const Matrix& x) const {
    Matrix h = x;
    for (int l = 0; l < layers(); ++l) {
      Matrix z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
      h = std::move(z);
    }
    return h;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    tape.activations.resize(static_cast<std::size_t>(layers()) + 1);
    tape.activations[0] = x;
    for (int l = 0; l < layers(); ++l) {
      Matrix z = weight(l) * tape.activations[static_cast<std::size_t>(l)];
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
      tape.activations[static_cast<std::size_t>(l) + 1] = std::move(z);
    }
    return tape.activations.back();
  }

  /// Reverse pass: given dLoss/dOutput (output_size x N), writes dLoss/dParameters into
  /// `grad` (same layout as parameters(), overwritten).
  void backward(const Tape& tape, const Matrix& grad_out, ParamVector<Scalar>& grad) const {
    grad.assign(params_.size(), Scalar(0));
    Matrix delta = grad_out;
    for (int l = layers() - 1; l >= 0; --l) {
      const Matrix& a_in = tape.activations[static_cast<std::size_t>(l)];
      MatMap gw(grad.data() + offsets_[l], out(l), in(l));
      VecMap gb(grad.data() + offsets_[l] + out(l) * in(l), out(l));
      gw.noalias() = delta * a_in.transpose();
      gb = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weight(l).transpose() * delta;
        // ReLU mask: the stored activation is positive exactly where the unit was active.
        delta = back.cwiseProduct(a_in.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
      }
    }
  }

  void copy_from(const Mlp& other) {
    if (other.sizes_ != sizes_) throw std::invalid_argument("network shapes differ");
    params_ = other.params_;
  }

 private:
  Eigen::Index in(int l) const { return sizes_[static_cast<std::size_t>(l)]; }
  Eigen::Index out(int l) const { return sizes_[static_cast<std::size_t>(l) + 1]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  ParamVector<Scalar> params_;
};

/// Adam over a flat parameter vector.
template <typename Scalar>
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(ParamVector<Scalar>& params, const ParamVector<Scalar>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      params[i] -= static_cast<Scalar>(lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_));
    }
  }

  long long steps() const { return t_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace lanereg::qlearner

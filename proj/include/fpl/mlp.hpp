#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fpl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OutputActivation : std::uint32_t { identity = 0, tanh_scaled = 1, logistic = 2 };

/// Samples are columns: a batch of B inputs is an (in x B) matrix.
struct ForwardCache {
  std::vector<Matrix> activations; // activations[0] is the input
  const void* owner = nullptr;
  std::uint64_t version = 0;

  const Matrix& output() const { return activations.back(); }
};

struct MlpGrad {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }

  void scale(double k) {
    for (auto& w : weights) w *= k;
    for (auto& b : biases) b *= k;
  }
};

/// Fully connected network with tanh hidden layers.
class Mlp {
public:
  Mlp() = default;

  /// Xavier-uniform weights and zero biases. For tanh_scaled outputs,
  /// `low`/`high` give the per-dimension output range.
  Mlp(std::vector<std::size_t> layer_sizes, OutputActivation out, std::mt19937_64& rng,
      std::vector<double> low = {}, std::vector<double> high = {})
      : sizes_(std::move(layer_sizes)), out_(out) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (std::size_t s : sizes_)
      if (s == 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    set_output_range(std::move(low), std::move(high));
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      const auto in = static_cast<Eigen::Index>(sizes_[i]);
      const auto outn = static_cast<Eigen::Index>(sizes_[i + 1]);
      const double limit = std::sqrt(6.0 / static_cast<double>(in + outn));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Matrix w(outn, in);
      for (Eigen::Index c = 0; c < in; ++c)
        for (Eigen::Index r = 0; r < outn; ++r) w(r, c) = dist(rng);
      weights_.push_back(std::move(w));
      biases_.push_back(Vector::Zero(outn));
    }
  }

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  OutputActivation output_activation() const { return out_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const Vector& output_low() const { return low_; }
  const Vector& output_high() const { return high_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) n += (sizes_[i] + 1) * sizes_[i + 1];
    return n;
  }

  Matrix& weights(std::size_t layer) {
    ++version_;
    return weights_[layer];
  }
  Vector& biases(std::size_t layer) {
    ++version_;
    return biases_[layer];
  }
  const Matrix& weights(std::size_t layer) const { return weights_[layer]; }
  const Vector& biases(std::size_t layer) const { return biases_[layer]; }
  std::uint64_t version() const { return version_; }

  void set_output_range(std::vector<double> low, std::vector<double> high) {
    const auto n = static_cast<Eigen::Index>(sizes_.back());
    if (out_ == OutputActivation::tanh_scaled) {
      if (low.size() != sizes_.back() || high.size() != sizes_.back())
        throw std::invalid_argument("Mlp: tanh_scaled output needs a range per output");
      low_ = Eigen::Map<const Vector>(low.data(), n);
      high_ = Eigen::Map<const Vector>(high.data(), n);
    } else {
      low_ = Vector::Zero(n);
      high_ = Vector::Zero(n);
    }
    ++version_;
  }

  ForwardCache forward(const Matrix& input) const {
    if (input.rows() != static_cast<Eigen::Index>(input_dim()))
      throw std::invalid_argument("Mlp::forward: expected input dimension " +
                                  std::to_string(input_dim()) + ", got " +
                                  std::to_string(input.rows()));
    ForwardCache cache;
    cache.owner = this;
    cache.version = version_;
    cache.activations.reserve(weights_.size() + 1);
    cache.activations.push_back(input);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      Matrix z = weights_[i] * cache.activations.back();
      z.colwise() += biases_[i];
      if (i + 1 < weights_.size()) {
        z = z.array().tanh().matrix();
      } else {
        switch (out_) {
        case OutputActivation::identity: break;
        case OutputActivation::tanh_scaled: {
          const Vector mid = (high_ + low_) / 2.0;
          const Vector half = (high_ - low_) / 2.0;
          const Matrix t = z.array().tanh().matrix();
          z = ((t.array().colwise() * half.array()).colwise() + mid.array()).matrix();
          break;
        }
        case OutputActivation::logistic: z = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
        }
      }
      cache.activations.push_back(std::move(z));
    }
    return cache;
  }

  Vector forward_one(std::span<const double> x) const {
    const Matrix in = Eigen::Map<const Matrix>(x.data(), static_cast<Eigen::Index>(x.size()), 1);
    return forward(in).output().col(0);
  }

  /// Reverse-mode pass: `output_grad` is dL/d(output), same shape as the
  /// cached output. Throws if the cache came from another network or from
  /// parameters that have since changed.
  MlpGrad backward(const ForwardCache& cache, const Matrix& output_grad) const {
    if (cache.owner != this || cache.version != version_)
      throw std::logic_error("Mlp::backward: stale forward cache");
    if (output_grad.rows() != cache.output().rows() || output_grad.cols() != cache.output().cols())
      throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");

    const std::size_t layers = weights_.size();
    MlpGrad g;
    g.weights.resize(layers);
    g.biases.resize(layers);

    const Matrix& y = cache.output();
    Matrix delta;
    switch (out_) {
    case OutputActivation::identity: delta = output_grad; break;
    case OutputActivation::tanh_scaled: {
      const Vector mid = (high_ + low_) / 2.0;
      const Vector half = (high_ - low_) / 2.0;
      // y = mid + half * t, dy/dz = half * (1 - t^2)
      const Eigen::ArrayXXd t = (y.colwise() - mid).array().colwise() / half.array();
      const Eigen::ArrayXXd dydz = (1.0 - t.square()).colwise() * half.array();
      delta = (output_grad.array() * dydz).matrix();
      break;
    }
    case OutputActivation::logistic:
      delta = (output_grad.array() * y.array() * (1.0 - y.array())).matrix();
      break;
    }

    for (std::size_t i = layers; i-- > 0;) {
      const Matrix& a_in = cache.activations[i];
      g.weights[i] = delta * a_in.transpose();
      g.biases[i] = delta.rowwise().sum();
      Matrix back = weights_[i].transpose() * delta;
      if (i > 0) {
        delta = (back.array() * (1.0 - a_in.array().square())).matrix();
      } else {
        g.input = std::move(back);
      }
    }
    return g;
  }

  /// Parameters in layer order, each layer's weights row-major then biases.
  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      for (Eigen::Index r = 0; r < weights_[i].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[i].cols(); ++c) out.push_back(weights_[i](r, c));
      for (Eigen::Index r = 0; r < biases_[i].size(); ++r) out.push_back(biases_[i](r));
    }
    return out;
  }

  void set_flat_parameters(std::span<const double> values) {
    if (values.size() != parameter_count())
      throw std::invalid_argument("Mlp: parameter vector has the wrong length");
    std::size_t k = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      for (Eigen::Index r = 0; r < weights_[i].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[i].cols(); ++c) weights_[i](r, c) = values[k++];
      for (Eigen::Index r = 0; r < biases_[i].size(); ++r) biases_[i](r) = values[k++];
    }
    ++version_;
  }

  /// Applies f(param&) to every parameter in flat order.
  template <class F>
  void for_each_parameter(F&& f) {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      for (Eigen::Index r = 0; r < weights_[i].rows(); ++r)
        for (Eigen::Index c = 0; c < weights_[i].cols(); ++c) f(weights_[i](r, c));
      for (Eigen::Index r = 0; r < biases_[i].size(); ++r) f(biases_[i](r));
    }
    ++version_;
  }

  bool same_shape(const Mlp& other) const { return sizes_ == other.sizes_ && out_ == other.out_; }

private:
  std::vector<std::size_t> sizes_;
  OutputActivation out_ = OutputActivation::identity;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Vector low_;
  Vector high_;
  std::uint64_t version_ = 0;
};

struct TargetPair {
  Mlp online;
  Mlp target;

  explicit TargetPair(Mlp net) : online(net), target(std::move(net)) {}
};

/// target <- (1 - tau) target + tau online.
inline void polyak_update(TargetPair& pair, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau must be in [0,1]");
  for (std::size_t i = 0; i < pair.online.layer_count(); ++i) {
    pair.target.weights(i) = (1.0 - tau) * pair.target.weights(i) + tau * pair.online.weights(i);
    pair.target.biases(i) = (1.0 - tau) * pair.target.biases(i) + tau * pair.online.biases(i);
  }
}

/// A copy of `net` with N(0, sigma * j_prev) added to every parameter.
inline Mlp perturb_params(const Mlp& net, double sigma, double j_prev, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("perturb_params: sigma must be >= 0");
  Mlp copy = net;
  const double scale = sigma * j_prev;
  if (scale == 0.0) return copy;
  std::normal_distribution<double> noise(0.0, scale);
  copy.for_each_parameter([&](double& w) { w += noise(rng); });
  return copy;
}

enum class OptimizerKind { sgd, adam };

/// Fixed-step gradient descent with global gradient-norm clipping. Adam
/// keeps per-parameter moment estimates.
class Optimizer {
public:
  Optimizer() = default;
  Optimizer(const Mlp& net, OptimizerKind kind, double lr, double clip_norm = 1.0)
      : kind_(kind), lr_(lr), clip_(clip_norm) {
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
      m_w_.push_back(Matrix::Zero(net.weights(i).rows(), net.weights(i).cols()));
      v_w_.push_back(Matrix::Zero(net.weights(i).rows(), net.weights(i).cols()));
      m_b_.push_back(Vector::Zero(net.biases(i).size()));
      v_b_.push_back(Vector::Zero(net.biases(i).size()));
    }
  }

  double learning_rate() const { return lr_; }

  /// Descends along `grad` (a gradient of a loss to minimize).
  void step(Mlp& net, MlpGrad grad) {
    if (clip_ > 0.0) {
      const double norm = std::sqrt(grad.squared_norm());
      if (norm > clip_) grad.scale(clip_ / norm);
    }
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < net.layer_count(); ++i) {
        net.weights(i) -= lr_ * grad.weights[i];
        net.biases(i) -= lr_ * grad.biases[i];
      }
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
      update(net.weights(i), m_w_[i], v_w_[i], grad.weights[i]);
      update(net.biases(i), m_b_[i], v_b_[i], grad.biases[i]);
    }
  }

private:
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  OptimizerKind kind_ = OptimizerKind::adam;
  double lr_ = 1e-3;
  double clip_ = 1.0;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_w_, v_w_;
  std::vector<Vector> m_b_, v_b_;
};

} // namespace fpl::nn

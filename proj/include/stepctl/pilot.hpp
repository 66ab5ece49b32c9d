#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stepctl/features.hpp"

namespace stepctl {

inline constexpr int kDefaultHiddenDim = 96;
inline constexpr double kBceEpsilon = 1e-7;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Gate { Update, Reset, Candidate };

/// Recurrent hidden state carried between steps of one session.
struct PilotState {
  Eigen::VectorXd h;
};

/// Single-layer GRU over step feature vectors with a sigmoid scalar head.
///
///   u = sigmoid(W_u [z; h] + b_u)
///   r = sigmoid(W_r [z; h] + b_r)
///   c = tanh(W_c [z; r*h] + b_c)
///   h' = (1 - u) * h + u * c
///   v = sigmoid(w . h' + b)
///
/// All parameters live in one flat buffer: for each gate a row-major
/// hidden x (input + hidden) weight followed by its bias, then the head.
class PilotModel {
 public:
  explicit PilotModel(int hidden_dim = kDefaultHiddenDim, int input_dim = static_cast<int>(kFeatureDim));

  /// Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) initialization, deterministic in `seed`.
  static PilotModel initialized(int hidden_dim, std::uint64_t seed,
                                int input_dim = static_cast<int>(kFeatureDim));

  int hidden_dim() const noexcept { return hidden_; }
  int input_dim() const noexcept { return input_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  static std::size_t parameter_count(int hidden_dim, int input_dim) noexcept;

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  Eigen::Map<RowMatrix> weight(Gate g);
  Eigen::Map<const RowMatrix> weight(Gate g) const;
  Eigen::Map<Eigen::VectorXd> bias(Gate g);
  Eigen::Map<const Eigen::VectorXd> bias(Gate g) const;
  Eigen::Map<Eigen::VectorXd> head_weight();
  Eigen::Map<const Eigen::VectorXd> head_weight() const;
  double& head_bias() { return params_.back(); }
  double head_bias() const { return params_.back(); }

  /// Correctness probabilities v_t for a trajectory, starting from h_0 = 0.
  std::vector<double> forward(std::span<const StepFeatureVector> trajectory) const;
  /// Same, with the trajectory as an input_dim x T column matrix.
  std::vector<double> forward(const Eigen::MatrixXd& inputs) const;

  PilotState initial_state() const;
  /// Advances one step and returns v_t.
  double step(PilotState& state, std::span<const double> z) const;

  bool operator==(const PilotModel& other) const = default;

 private:
  std::size_t gate_offset(Gate g) const noexcept;
  std::size_t head_offset() const noexcept;

  int hidden_;
  int input_;
  std::vector<double> params_;
};

/// r = 1 - v.
double difficulty(double v) noexcept;

/// Binary cross-entropy against a soft target; v is clamped to [eps, 1 - eps].
double bce_loss(double v, double v_star) noexcept;

/// One distillation example: the trajectory's inputs as columns plus teacher targets.
struct TrainSample {
  Eigen::MatrixXd inputs;  // input_dim x T
  std::vector<double> targets;

  static TrainSample from_trajectory(std::span<const StepFeatureVector> trajectory, std::vector<double> targets);
  std::size_t steps() const noexcept { return targets.size(); }
};

/// Mean BCE over every step of every sample.
double mean_loss(const PilotModel& model, std::span<const TrainSample> batch);

/// Mean BCE over the batch and its gradient (backpropagation through time),
/// laid out like PilotModel::parameters(). `grad` is overwritten.
double loss_and_gradient(const PilotModel& model, std::span<const TrainSample> batch, std::vector<double>& grad);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int patience = 0;  // epochs without improvement before stopping; 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

void validate_train_config(const TrainConfig& cfg);

struct TrainResult {
  PilotModel model;
  std::vector<double> loss_history;  // mean training BCE per epoch
};

TrainResult train(PilotModel model, std::span<const TrainSample> data, const TrainConfig& cfg);

}  // namespace stepctl

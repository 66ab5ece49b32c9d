#include "stepctl/pilot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "stepctl/error.hpp"

namespace stepctl {

namespace {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double a) { return sigmoid(a); });
}

// Everything the backward pass needs from one trajectory.
struct ForwardCache {
  Eigen::MatrixXd h;   // hidden x (T + 1); column 0 is h_0
  Eigen::MatrixXd u;   // hidden x T
  Eigen::MatrixXd r;
  Eigen::MatrixXd c;
  Eigen::MatrixXd rh;  // r * h_prev
  std::vector<double> v;
};

void run_forward(const PilotModel& m, const Eigen::MatrixXd& z, ForwardCache& cache) {
  const int hd = m.hidden_dim();
  const int in = m.input_dim();
  const Eigen::Index steps = z.cols();
  if (z.rows() != in) {
    throw Error(Errc::DimensionMismatch,
                "step input has " + std::to_string(z.rows()) + " dims, model expects " + std::to_string(in));
  }

  const auto wu = m.weight(Gate::Update);
  const auto wr = m.weight(Gate::Reset);
  const auto wc = m.weight(Gate::Candidate);
  const Eigen::MatrixXd xu = (wu.leftCols(in) * z).colwise() + m.bias(Gate::Update);
  const Eigen::MatrixXd xr = (wr.leftCols(in) * z).colwise() + m.bias(Gate::Reset);
  const Eigen::MatrixXd xc = (wc.leftCols(in) * z).colwise() + m.bias(Gate::Candidate);
  const auto head = m.head_weight();

  cache.h.setZero(hd, steps + 1);
  cache.u.resize(hd, steps);
  cache.r.resize(hd, steps);
  cache.c.resize(hd, steps);
  cache.rh.resize(hd, steps);
  cache.v.resize(static_cast<std::size_t>(steps));

  for (Eigen::Index t = 0; t < steps; ++t) {
    const Eigen::VectorXd hp = cache.h.col(t);
    const Eigen::VectorXd u = sigmoid(xu.col(t) + wu.rightCols(hd) * hp);
    const Eigen::VectorXd r = sigmoid(xr.col(t) + wr.rightCols(hd) * hp);
    const Eigen::VectorXd rh = r.cwiseProduct(hp);
    const Eigen::VectorXd c = (xc.col(t) + wc.rightCols(hd) * rh).array().tanh().matrix();
    cache.h.col(t + 1) = hp + u.cwiseProduct(c - hp);
    cache.u.col(t) = u;
    cache.r.col(t) = r;
    cache.c.col(t) = c;
    cache.rh.col(t) = rh;
    cache.v[static_cast<std::size_t>(t)] = sigmoid(head.dot(cache.h.col(t + 1)) + m.head_bias());
  }
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

PilotModel::PilotModel(int hidden_dim, int input_dim)
    : hidden_(hidden_dim), input_(input_dim) {
  if (hidden_dim < 1 || input_dim < 1) throw Error(Errc::DimensionMismatch, "pilot dimensions must be positive");
  params_.assign(parameter_count(hidden_dim, input_dim), 0.0);
}

PilotModel PilotModel::initialized(int hidden_dim, std::uint64_t seed, int input_dim) {
  PilotModel m(hidden_dim, input_dim);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& p : m.params_) p = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

std::size_t PilotModel::parameter_count(int hidden_dim, int input_dim) noexcept {
  const auto h = static_cast<std::size_t>(hidden_dim);
  const auto i = static_cast<std::size_t>(input_dim);
  return 3 * h * (i + h + 1) + h + 1;
}

std::size_t PilotModel::gate_offset(Gate g) const noexcept {
  const auto h = static_cast<std::size_t>(hidden_);
  const auto block = h * (static_cast<std::size_t>(input_) + h + 1);
  return static_cast<std::size_t>(g) * block;
}

std::size_t PilotModel::head_offset() const noexcept {
  const auto h = static_cast<std::size_t>(hidden_);
  return 3 * h * (static_cast<std::size_t>(input_) + h + 1);
}

Eigen::Map<RowMatrix> PilotModel::weight(Gate g) {
  return {params_.data() + gate_offset(g), hidden_, input_ + hidden_};
}
Eigen::Map<const RowMatrix> PilotModel::weight(Gate g) const {
  return {params_.data() + gate_offset(g), hidden_, input_ + hidden_};
}
Eigen::Map<Eigen::VectorXd> PilotModel::bias(Gate g) {
  return {params_.data() + gate_offset(g) + static_cast<std::size_t>(hidden_ * (input_ + hidden_)), hidden_};
}
Eigen::Map<const Eigen::VectorXd> PilotModel::bias(Gate g) const {
  return {params_.data() + gate_offset(g) + static_cast<std::size_t>(hidden_ * (input_ + hidden_)), hidden_};
}
Eigen::Map<Eigen::VectorXd> PilotModel::head_weight() { return {params_.data() + head_offset(), hidden_}; }
Eigen::Map<const Eigen::VectorXd> PilotModel::head_weight() const {
  return {params_.data() + head_offset(), hidden_};
}

std::vector<double> PilotModel::forward(std::span<const StepFeatureVector> trajectory) const {
  Eigen::MatrixXd z(input_, static_cast<Eigen::Index>(trajectory.size()));
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (trajectory[t].z.size() != static_cast<std::size_t>(input_)) {
      throw Error(Errc::DimensionMismatch, "step " + std::to_string(t) + " has " +
                                               std::to_string(trajectory[t].z.size()) + " features, expected " +
                                               std::to_string(input_));
    }
    z.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Eigen::VectorXd>(trajectory[t].z.data(), input_);
  }
  return forward(z);
}

std::vector<double> PilotModel::forward(const Eigen::MatrixXd& inputs) const {
  ForwardCache cache;
  run_forward(*this, inputs, cache);
  return std::move(cache.v);
}

PilotState PilotModel::initial_state() const { return PilotState{Eigen::VectorXd::Zero(hidden_)}; }

double PilotModel::step(PilotState& state, std::span<const double> z) const {
  if (z.size() != static_cast<std::size_t>(input_)) {
    throw Error(Errc::DimensionMismatch,
                "step input has " + std::to_string(z.size()) + " dims, model expects " + std::to_string(input_));
  }
  const Eigen::Map<const Eigen::VectorXd> x(z.data(), input_);
  const auto wu = weight(Gate::Update);
  const auto wr = weight(Gate::Reset);
  const auto wc = weight(Gate::Candidate);
  const Eigen::VectorXd& hp = state.h;
  const Eigen::VectorXd u = sigmoid(wu.leftCols(input_) * x + wu.rightCols(hidden_) * hp + bias(Gate::Update));
  const Eigen::VectorXd r = sigmoid(wr.leftCols(input_) * x + wr.rightCols(hidden_) * hp + bias(Gate::Reset));
  const Eigen::VectorXd c =
      (wc.leftCols(input_) * x + wc.rightCols(hidden_) * r.cwiseProduct(hp) + bias(Gate::Candidate))
          .array()
          .tanh()
          .matrix();
  state.h = hp + u.cwiseProduct(c - hp);
  return sigmoid(head_weight().dot(state.h) + head_bias());
}

double difficulty(double v) noexcept { return 1.0 - v; }

double bce_loss(double v, double v_star) noexcept {
  const double p = std::clamp(v, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(v_star * std::log(p) + (1.0 - v_star) * std::log(1.0 - p));
}

TrainSample TrainSample::from_trajectory(std::span<const StepFeatureVector> trajectory, std::vector<double> targets) {
  if (trajectory.size() != targets.size()) {
    throw Error(Errc::LengthMismatch, "trajectory has " + std::to_string(trajectory.size()) + " steps but " +
                                          std::to_string(targets.size()) + " targets");
  }
  TrainSample s;
  const auto dim = trajectory.empty() ? static_cast<Eigen::Index>(kFeatureDim)
                                      : static_cast<Eigen::Index>(trajectory.front().z.size());
  s.inputs.resize(dim, static_cast<Eigen::Index>(trajectory.size()));
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (static_cast<Eigen::Index>(trajectory[t].z.size()) != dim) {
      throw Error(Errc::DimensionMismatch, "ragged trajectory at step " + std::to_string(t));
    }
    s.inputs.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Eigen::VectorXd>(trajectory[t].z.data(), dim);
  }
  s.targets = std::move(targets);
  return s;
}

double mean_loss(const PilotModel& model, std::span<const TrainSample> batch) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : batch) {
    const auto v = model.forward(s.inputs);
    for (std::size_t t = 0; t < v.size(); ++t) total += bce_loss(v[t], s.targets[t]);
    n += v.size();
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

namespace {

// Adds this sample's gradient (already scaled by 1/n_total) into grad; returns the summed loss.
double accumulate_sample(const PilotModel& m, const TrainSample& s, double inv_n, std::vector<double>& grad) {
  if (s.targets.size() != static_cast<std::size_t>(s.inputs.cols())) {
    throw Error(Errc::LengthMismatch, "sample inputs and targets differ in length");
  }
  ForwardCache fc;
  run_forward(m, s.inputs, fc);

  const int hd = m.hidden_dim();
  const int in = m.input_dim();
  const Eigen::Index steps = s.inputs.cols();
  const auto wu_h = m.weight(Gate::Update).rightCols(hd);
  const auto wr_h = m.weight(Gate::Reset).rightCols(hd);
  const auto wc_h = m.weight(Gate::Candidate).rightCols(hd);
  const auto head = m.head_weight();

  Eigen::MatrixXd dau(hd, steps), dar(hd, steps), dac(hd, steps);
  Eigen::VectorXd dhead = Eigen::VectorXd::Zero(hd);
  double dhead_b = 0.0;
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hd);
  double loss = 0.0;

  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const double v = fc.v[ti];
    const double target = s.targets[ti];
    loss += bce_loss(v, target);
    // d(bce)/d(logit) = v - v*, zero where the clamp is active.
    const double dlogit = (v < kBceEpsilon || v > 1.0 - kBceEpsilon) ? 0.0 : (v - target) * inv_n;

    const auto h = fc.h.col(t + 1);
    const auto hp = fc.h.col(t);
    const auto u = fc.u.col(t);
    const auto r = fc.r.col(t);
    const auto c = fc.c.col(t);

    dhead += dlogit * h;
    dhead_b += dlogit;
    const Eigen::VectorXd dh = dlogit * head + dh_next;

    const Eigen::VectorXd du = dh.cwiseProduct(c - hp);
    const Eigen::VectorXd dc = dh.cwiseProduct(u);
    Eigen::VectorXd dhp = dh - dh.cwiseProduct(u);

    dac.col(t) = dc.array() * (1.0 - c.array().square());
    const Eigen::VectorXd drh = wc_h.transpose() * dac.col(t);
    const Eigen::VectorXd dr = drh.cwiseProduct(hp);
    dhp += drh.cwiseProduct(r);

    dau.col(t) = du.array() * u.array() * (1.0 - u.array());
    dar.col(t) = dr.array() * r.array() * (1.0 - r.array());
    dhp += wu_h.transpose() * dau.col(t) + wr_h.transpose() * dar.col(t);
    dh_next = dhp;
  }

  // Weight gradients over all time steps as matrix products.
  const auto hprev = fc.h.leftCols(steps);
  auto add_gate = [&](Gate g, const Eigen::MatrixXd& da, const auto& hidden_in) {
    const std::size_t block = static_cast<std::size_t>(hd) * static_cast<std::size_t>(in + hd + 1);
    double* base = grad.data() + static_cast<std::size_t>(g) * block;
    Eigen::Map<RowMatrix> gw(base, hd, in + hd);
    Eigen::Map<Eigen::VectorXd> gb(base + static_cast<std::size_t>(hd) * static_cast<std::size_t>(in + hd), hd);
    gw.leftCols(in).noalias() += da * s.inputs.transpose();
    gw.rightCols(hd).noalias() += da * hidden_in.transpose();
    gb += da.rowwise().sum();
  };
  add_gate(Gate::Update, dau, hprev);
  add_gate(Gate::Reset, dar, hprev);
  add_gate(Gate::Candidate, dac, fc.rh);

  const std::size_t head_off = grad.size() - static_cast<std::size_t>(hd) - 1;
  Eigen::Map<Eigen::VectorXd>(grad.data() + head_off, hd) += dhead;
  grad.back() += dhead_b;
  return loss;
}

}  // namespace

double loss_and_gradient(const PilotModel& model, std::span<const TrainSample> batch, std::vector<double>& grad) {
  grad.assign(model.parameter_count(), 0.0);
  std::size_t n = 0;
  for (const auto& s : batch) n += s.steps();
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (const auto& s : batch) total += accumulate_sample(model, s, inv_n, grad);
  return total * inv_n;
}

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw Error(Errc::InvalidTrainConfig, "learning_rate must be finite and non-negative");
  }
  if (cfg.epochs < 0) throw Error(Errc::InvalidTrainConfig, "epochs must be >= 0");
  if (cfg.batch_size < 1) throw Error(Errc::InvalidTrainConfig, "batch_size must be >= 1");
  if (cfg.patience < 0) throw Error(Errc::InvalidTrainConfig, "patience must be >= 0");
}

TrainResult train(PilotModel model, std::span<const TrainSample> data, const TrainConfig& cfg) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "no training samples");
  validate_train_config(cfg);
  for (const auto& s : data) {
    if (s.inputs.rows() != model.input_dim()) {
      throw Error(Errc::DimensionMismatch, "training sample input dimension does not match the model");
    }
  }

  TrainResult result{std::move(model), {}};
  PilotModel& m = result.model;
  const std::size_t n_params = m.parameter_count();
  std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0), grad;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::size_t total_steps = 0;
  for (const auto& s : data) total_steps += s.steps();

  long long adam_t = 0;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<double> sample_loss(data.size(), 0.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with raw engine output so shuffles match across standard libraries.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t n = 0;
      for (std::size_t i = start; i < end; ++i) n += data[order[i]].steps();
      if (n == 0) continue;

      grad.assign(n_params, 0.0);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = start; i < end; ++i) {
        sample_loss[order[i]] = accumulate_sample(m, data[order[i]], inv_n, grad);
      }

      ++adam_t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
      auto params = m.parameters();
      for (std::size_t p = 0; p < n_params; ++p) {
        adam_m[p] = cfg.beta1 * adam_m[p] + (1.0 - cfg.beta1) * grad[p];
        adam_v[p] = cfg.beta2 * adam_v[p] + (1.0 - cfg.beta2) * grad[p] * grad[p];
        params[p] -= cfg.learning_rate * (adam_m[p] / bc1) / (std::sqrt(adam_v[p] / bc2) + cfg.adam_epsilon);
      }
    }

    // Summed in sample order so the value does not depend on the shuffle.
    const double epoch_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) /
                              static_cast<double>(std::max<std::size_t>(total_steps, 1));
    result.loss_history.push_back(epoch_loss);

    if (cfg.patience > 0) {
      if (epoch_loss < best - 1e-6) {
        best = epoch_loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace stepctl

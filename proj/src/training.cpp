#include "esrm/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>

#include <json.hpp>

namespace esrm {

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor*> params)
    : config_(config), params_(std::move(params)) {
  for (const Tensor* t : params_) {
    if (!t->trainable)
      throw ConfigError("Optimizer: frozen tensor '" + t->name +
                        "' cannot carry optimizer state");
  }
  if (config_.kind == OptimizerConfig::Kind::kAdam) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor* t : params_) {
      m_.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
      v_.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
    }
  }
}

void Optimizer::apply() {
  ++step_;
  if (config_.kind == OptimizerConfig::Kind::kSgd) {
    for (Tensor* t : params_) t->value -= config_.lr * t->grad;
    return;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor* t = params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * t->grad;
    v_[i] = config_.beta2 * v_[i].array().matrix() +
            (1.0 - config_.beta2) * t->grad.cwiseProduct(t->grad);
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    t->value.array() -=
        config_.lr * mhat.array() / (vhat.array().sqrt() + config_.eps);
  }
}

double global_grad_norm(std::span<Tensor* const> params) {
  double sum = 0.0;
  for (const Tensor* t : params) sum += t->grad.squaredNorm();
  return std::sqrt(sum);
}

double clip_global_norm(std::span<Tensor* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Tensor* t : params) t->grad *= scale;
  }
  return norm;
}

StepReport train_step(TransducerModel& model, std::span<const Utterance> batch,
                      Optimizer& opt) {
  if (batch.empty()) throw EmptyInputError("train_step: empty batch");
  const auto t0 = std::chrono::steady_clock::now();

  model.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total_loss = 0.0;
  for (const Utterance& utt : batch) {
    ForwardCache cache;
    const LogitLattice lattice =
        model_forward(model, utt.frames, utt.labels, &cache);
    LossResult res = transducer_loss(lattice, utt.labels);
    total_loss += res.loss;
    res.dlogits *= inv_b;
    model_backward(model, cache, res.dlogits);
  }
  StepReport report;
  report.step = opt.steps() + 1;
  report.loss = total_loss * inv_b;
  report.updated_tensors = static_cast<int>(opt.params().size());
  if (!std::isfinite(report.loss))
    throw DivergenceError("train_step: non-finite loss " +
                          std::to_string(report.loss) + " at step " +
                          std::to_string(report.step));
  report.grad_norm = clip_global_norm(opt.params(), opt.config().clip_norm);
  opt.apply();
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

std::vector<StepReport> train_loop(TransducerModel& model,
                                   std::span<const Utterance> data,
                                   const TrainLoopConfig& config,
                                   std::ostream* jsonl) {
  if (data.empty()) throw EmptyInputError("train_loop: empty dataset");
  if (config.batch_size < 1)
    throw ConfigError("train_loop: batch_size must be >= 1");
  Optimizer opt(config.opt, model.trainable_tensors());
  Prng rng(config.batch_seed);

  std::vector<StepReport> reports;
  reports.reserve(static_cast<std::size_t>(config.steps));
  std::vector<Utterance> batch(static_cast<std::size_t>(config.batch_size));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    for (auto& slot : batch)
      slot = data[rng.next_below(data.size())];
    const StepReport report = train_step(model, batch, opt);
    if (jsonl) {
      nlohmann::json line;
      line["step"] = report.step;
      line["loss"] = report.loss;
      line["wall_ms"] = report.wall_ms;
      line["grad_norm"] = report.grad_norm;
      line["updated_tensors"] = report.updated_tensors;
      (*jsonl) << line.dump() << '\n';
    }
    reports.push_back(report);
  }
  return reports;
}

double batch_loss(const TransducerModel& model,
                  std::span<const Utterance> batch) {
  if (batch.empty()) throw EmptyInputError("batch_loss: empty batch");
  double total = 0.0;
  for (const Utterance& utt : batch)
    total +=
        transducer_loss(model_forward(model, utt.frames, utt.labels), utt.labels)
            .loss;
  return total / static_cast<double>(batch.size());
}

FiniteDiffResult finite_diff_against(std::span<Tensor* const> params,
                                     const std::function<double()>& loss_fn,
                                     double epsilon) {
  if (epsilon <= 0.0) throw ConfigError("finite_diff: epsilon must be positive");
  FiniteDiffResult result;
  // Near-zero pairs compare against this floor instead of blowing up.
  constexpr double kDenomFloor = 1e-3;
  for (Tensor* t : params) {
    for (Eigen::Index idx = 0; idx < t->value.size(); ++idx) {
      double& v = t->value.data()[idx];
      const double saved = v;
      v = saved + epsilon;
      const double up = loss_fn();
      v = saved - epsilon;
      const double down = loss_fn();
      v = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = t->grad.data()[idx];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), kDenomFloor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked_params;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = t->name;
      }
    }
  }
  return result;
}

FiniteDiffResult finite_diff_check(TransducerModel& model,
                                   std::span<const Utterance> batch,
                                   double epsilon) {
  const auto params = model.trainable_tensors();
  std::int64_t total = 0;
  for (const Tensor* t : params) total += t->size();
  if (total > 5000)
    throw ConfigError("finite_diff_check: model has " + std::to_string(total) +
                      " parameters; limit is 5000");

  model.zero_grads();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Utterance& utt : batch) {
    ForwardCache cache;
    const LogitLattice lattice =
        model_forward(model, utt.frames, utt.labels, &cache);
    LossResult res = transducer_loss(lattice, utt.labels);
    res.dlogits *= inv_b;
    model_backward(model, cache, res.dlogits);
  }
  return finite_diff_against(
      params, [&model, batch]() { return batch_loss(model, batch); }, epsilon);
}

Matrix ridge_readout(const Matrix& states, const Matrix& targets,
                     double lambda) {
  if (states.rows() != targets.rows())
    throw ShapeError("ridge_readout: states and targets row counts differ");
  if (lambda < 0.0) throw ConfigError("ridge_readout: lambda must be >= 0");
  const Eigen::Index d = states.cols();

  // Stacked form [S; sqrt(lambda) I] W = [Y; 0] shares one solve path for
  // lambda = 0 and lambda > 0.
  Matrix a;
  Matrix b;
  if (lambda > 0.0) {
    a = Matrix(states.rows() + d, d);
    a.topRows(states.rows()) = states;
    a.bottomRows(d) = std::sqrt(lambda) * Matrix::Identity(d, d);
    b = Matrix::Zero(a.rows(), targets.cols());
    b.topRows(states.rows()) = targets;
  } else {
    a = states;
    b = targets;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < d)
    throw SingularityError(
        "ridge_readout: rank-deficient system with lambda = 0; pass lambda > 0");
  return qr.solve(b);
}

}  // namespace esrm

// Optimizers, the BPTT training loop, gradient verification, and the
// classical ridge readout baseline.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "esrm/data.hpp"
#include "esrm/tensor.hpp"
#include "esrm/transducer.hpp"

namespace esrm {

struct OptimizerConfig {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
};

// Owns per-tensor moment buffers; construction rejects frozen tensors, so
// optimizer state never exists for them.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor*> params);

  void apply();  // one update from the accumulated gradients
  std::int64_t steps() const { return step_; }
  const OptimizerConfig& config() const { return config_; }
  std::span<Tensor* const> params() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor*> params_;
  std::vector<Matrix> m_, v_;
  std::int64_t step_ = 0;
};

double global_grad_norm(std::span<Tensor* const> params);

// Scales gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(std::span<Tensor* const> params, double max_norm);

struct StepReport {
  std::int64_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
  double grad_norm = 0.0;
  int updated_tensors = 0;
};

// Mean loss over the batch, BPTT gradients for trainable tensors only, global
// clipping, one optimizer update. Throws DivergenceError on non-finite loss
// before any parameter is touched.
StepReport train_step(TransducerModel& model, std::span<const Utterance> batch,
                      Optimizer& opt);

struct TrainLoopConfig {
  std::int64_t steps = 2000;
  int batch_size = 16;
  std::uint64_t batch_seed = 0;
  OptimizerConfig opt;
};

// Uniform batch sampling from `data`, deterministic in batch_seed. If `jsonl`
// is set, one {step, loss, wall_ms, grad_norm, updated_tensors} object is
// written per step.
std::vector<StepReport> train_loop(TransducerModel& model,
                                   std::span<const Utterance> data,
                                   const TrainLoopConfig& config,
                                   std::ostream* jsonl = nullptr);

double batch_loss(const TransducerModel& model,
                  std::span<const Utterance> batch);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::int64_t checked_params = 0;
};

// Central differences on every coefficient of `params`; analytic gradients
// must already be accumulated in each tensor's grad buffer.
FiniteDiffResult finite_diff_against(
    std::span<Tensor* const> params, const std::function<double()>& loss_fn,
    double epsilon);

// Perturbs every trainable scalar of the model (including reservoir rho and
// gamma) against the mean batch loss. Guarded to small models.
FiniteDiffResult finite_diff_check(TransducerModel& model,
                                   std::span<const Utterance> batch,
                                   double epsilon);

// W = (S^T S + lambda I)^-1 S^T Y via a rank-revealing factorization of the
// regularized stacked system, never an explicit inverse. The returned W right-
// multiplies states: predictions = S * W.
Matrix ridge_readout(const Matrix& states, const Matrix& targets,
                     double lambda);

}  // namespace esrm

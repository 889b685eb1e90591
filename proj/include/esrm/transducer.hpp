// Sequence transducer: encoder and prediction-network stacks of trainable
// LSTM or frozen reservoir layers, a joint network, the transducer loss with
// an enumeration oracle, and greedy decoding. Blank is class 0 everywhere.
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "esrm/cells.hpp"
#include "esrm/numerics.hpp"
#include "esrm/reservoir.hpp"
#include "esrm/tensor.hpp"

namespace esrm {

enum class LayerKind { kTrainableLstm, kEsn };

struct LayerSpec {
  LayerKind kind = LayerKind::kTrainableLstm;
  int dim = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
  int feature_dim = 16;
  std::vector<LayerSpec> encoder_layers;
  std::vector<LayerSpec> decoder_layers;
  int joint_dim = 64;
  int vocab_size = 16;  // excludes blank
  int subsample_factor = 3;
  std::uint64_t master_seed = 1;
  double esn_sparsity = 0.8;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using StackLayer = std::variant<LstmCell, ReservoirLayer>;

struct TransducerModel {
  ModelConfig config;
  Tensor embedding;  // (vocab_size + 1) x embed_dim; row 0 is the start symbol
  std::vector<StackLayer> encoder;
  std::vector<StackLayer> decoder;
  Tensor w_enc;       // joint_dim x enc_top_dim
  Tensor w_dec;       // joint_dim x dec_top_dim
  Tensor joint_bias;  // joint_dim x 1
  Tensor w_out;       // (vocab_size + 1) x joint_dim

  int embed_dim() const { return static_cast<int>(embedding.value.cols()); }
  int encoder_top_dim() const { return static_cast<int>(w_enc.value.cols()); }
  int decoder_top_dim() const { return static_cast<int>(w_dec.value.cols()); }

  // Fixed registry order; reservoir scalars appear as 1x1 tensors.
  std::vector<Tensor*> trainable_tensors();
  std::vector<const Tensor*> trainable_tensors() const;
  void zero_grads();
};

// Per-tensor line for summaries; frozen reservoirs are listed too.
struct TensorInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::int64_t stored_params = 0;  // nonzeros for sparse entries
  bool trainable = false;
  bool sparse = false;
};
std::vector<TensorInfo> model_tensor_info(const TransducerModel& model);

// Deterministic in master_seed; reservoir seeds derive from it per layer.
TransducerModel build_model(const ModelConfig& config);

// Concatenates `factor` consecutive rows; leftover rows are dropped.
Matrix stack_frames(const Matrix& frames, int factor);

struct LogitLattice {
  int num_frames = 0;  // T, after subsampling
  int label_len = 0;   // U
  int vocab = 0;       // V, blank excluded
  // Column t*(U+1)+u holds the (V+1) logits for lattice node (t, u).
  Matrix logits;

  int col(int t, int u) const { return t * (label_len + 1) + u; }
};

// Cached activations from one forward pass, consumed by model_backward.
struct StackCache {
  Matrix inputs;                         // steps x in_dim of layer 0
  std::vector<Matrix> states;            // per layer: steps x dim
  std::vector<Matrix> cell_states;       // LSTM layers only
  std::vector<Matrix> gates;             // LSTM layers: steps x 4*dim
  std::vector<Matrix> res_pre, in_pre;   // reservoir layers: steps x dim
};

struct ForwardCache {
  StackCache enc, dec;
  Matrix joint_act;  // joint_dim x (T*(U+1)), post-tanh
  std::vector<int> labels;
};

// Full-sequence run over one stack (rows of `inputs` are steps); the model's
// encoder and decoder both go through this path.
Matrix run_stack(const std::vector<StackLayer>& stack, const Matrix& inputs,
                 StackCache* cache = nullptr);

// Reverse pass; consumes per-step gradients on the top layer's states and
// returns gradients on the layer-0 inputs.
Matrix run_stack_backward(std::vector<StackLayer>& stack,
                          const StackCache& cache, Matrix dtop);

LogitLattice model_forward(const TransducerModel& model, const Matrix& frames,
                           const std::vector<int>& labels,
                           ForwardCache* cache = nullptr);

// Accumulates gradients for every trainable tensor given dLoss/dLogits.
// Frozen reservoir weights never receive gradients; state gradients are
// propagated through them analytically.
void model_backward(TransducerModel& model, const ForwardCache& cache,
                    const Matrix& dlogits);

// logits = W_out tanh(W_enc enc_t + W_dec dec_u + b); no softmax applied.
Vector joint(const TransducerModel& model, const Vector& enc_t,
             const Vector& dec_u);

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;  // same layout as LogitLattice::logits
};

// Forward-backward over the T x (U+1) grid in log space. Blank advances t,
// label u+1 advances u; the path ends with the blank at (T-1, U).
LossResult transducer_loss(const LogitLattice& lattice,
                           const std::vector<int>& labels);

// Explicit enumeration of every alignment; guard: T + U <= 12.
double brute_force_loss(const LogitLattice& lattice,
                        const std::vector<int>& labels);

// Per frame, emits argmax tokens (ties toward the lowest index) until blank
// wins or the per-frame cap is hit.
std::vector<int> greedy_decode(const TransducerModel& model,
                               const Matrix& frames,
                               int max_symbols_per_frame = 4);

}  // namespace esrm

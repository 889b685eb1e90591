#include "esrm/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace esrm {

namespace {

constexpr std::uint64_t kStreamEmbedding = 0xE0ULL;
constexpr std::uint64_t kStreamJointEnc = 0x31AULL;
constexpr std::uint64_t kStreamJointDec = 0x32AULL;
constexpr std::uint64_t kStreamJointOut = 0x33AULL;
constexpr std::uint64_t kStreamEncLayer = 0x100ULL;
constexpr std::uint64_t kStreamDecLayer = 0x200ULL;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector elem_sigmoid(const Vector& v) {
  return v.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_labels(const std::vector<int>& labels, int vocab) {
  for (const int tok : labels) {
    if (tok < 1 || tok > vocab)
      throw VocabError("label token " + std::to_string(tok) +
                       " outside [1, " + std::to_string(vocab) + "]");
  }
}

int layer_input_dim(const StackLayer& layer) {
  return std::visit(
      [](const auto& l) -> int {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, LstmCell>)
          return l.input_dim;
        else
          return l.input_dim();
      },
      layer);
}

int layer_state_dim(const StackLayer& layer) {
  return std::visit(
      [](const auto& l) -> int {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, LstmCell>)
          return l.state_dim;
        else
          return l.state_dim();
      },
      layer);
}

}  // namespace

// Full-sequence stack run; the input-side projections are batched across
// time, the recurrent side stays sequential.
Matrix run_stack(const std::vector<StackLayer>& stack, const Matrix& inputs,
                 StackCache* cache) {
  if (stack.empty()) throw ConfigError("run_stack: empty stack");
  if (inputs.rows() == 0) throw EmptyInputError("run_stack: empty sequence");

  const Eigen::Index steps = inputs.rows();
  const std::size_t depth = stack.size();
  if (cache) {
    cache->inputs = inputs;
    cache->states.assign(depth, Matrix());
    cache->cell_states.assign(depth, Matrix());
    cache->gates.assign(depth, Matrix());
    cache->res_pre.assign(depth, Matrix());
    cache->in_pre.assign(depth, Matrix());
  }

  Matrix cur = inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    if (cur.cols() != layer_input_dim(stack[l]))
      throw ShapeError("run_stack: layer " + std::to_string(l) +
                       " expects input width " +
                       std::to_string(layer_input_dim(stack[l])) + ", got " +
                       std::to_string(cur.cols()));
    const int d = layer_state_dim(stack[l]);
    Matrix states(steps, d);

    if (const auto* cell = std::get_if<LstmCell>(&stack[l])) {
      const Matrix zx = cell->w_x.value * cur.transpose();  // 4d x steps
      Matrix cells(steps, d);
      Matrix gates(steps, 4 * d);
      Vector h = Vector::Zero(d);
      Vector c = Vector::Zero(d);
      for (Eigen::Index t = 0; t < steps; ++t) {
        const Vector z = zx.col(t) + cell->w_h.value * h + cell->b.value.col(0);
        Vector gi = elem_sigmoid(z.segment(0, d));
        Vector gf = elem_sigmoid(z.segment(d, d));
        Vector gg = elem_tanh(Vector(z.segment(2 * d, d)));
        Vector go = elem_sigmoid(z.segment(3 * d, d));
        c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
        h = go.cwiseProduct(elem_tanh(c));
        states.row(t) = h.transpose();
        if (cache) {
          cells.row(t) = c.transpose();
          gates.row(t).segment(0, d) = gi.transpose();
          gates.row(t).segment(d, d) = gf.transpose();
          gates.row(t).segment(2 * d, d) = gg.transpose();
          gates.row(t).segment(3 * d, d) = go.transpose();
        }
      }
      if (cache) {
        cache->cell_states[l] = std::move(cells);
        cache->gates[l] = std::move(gates);
      }
    } else {
      const auto& layer = std::get<ReservoirLayer>(stack[l]);
      const Matrix in_pre = (layer.w_in * cur.transpose()).transpose();  // steps x d
      Matrix res_pre(steps, d);
      Vector h = Vector::Zero(d);
      const double rho = layer.rho_value();
      const double gamma = layer.gamma_value();
      for (Eigen::Index t = 0; t < steps; ++t) {
        const Vector rp = layer.w_res * h;
        h = elem_tanh(
            Vector(rho * rp + gamma * in_pre.row(t).transpose()));
        res_pre.row(t) = rp.transpose();
        states.row(t) = h.transpose();
      }
      if (cache) {
        cache->res_pre[l] = std::move(res_pre);
        cache->in_pre[l] = in_pre;
      }
    }

    if (cache) cache->states[l] = states;
    cur = std::move(states);
  }
  return cur;
}

// Reverse pass over one stack: consumes per-step gradients on the top layer's
// states, accumulates parameter gradients, returns gradients on the layer-0
// inputs. Reservoir weights only pass state gradients through their
// transposes; no per-entry weight gradient is ever formed.
Matrix run_stack_backward(std::vector<StackLayer>& stack,
                          const StackCache& cache, Matrix dtop) {
  const Eigen::Index steps = cache.inputs.rows();
  Matrix dcur = std::move(dtop);

  for (int l = static_cast<int>(stack.size()) - 1; l >= 0; --l) {
    const Matrix& layer_inputs =
        (l == 0) ? cache.inputs : cache.states[static_cast<std::size_t>(l - 1)];
    const Matrix& states = cache.states[static_cast<std::size_t>(l)];
    const int d = layer_state_dim(stack[static_cast<std::size_t>(l)]);
    Matrix dinputs;

    if (auto* cell = std::get_if<LstmCell>(&stack[static_cast<std::size_t>(l)])) {
      const Matrix& cells = cache.cell_states[static_cast<std::size_t>(l)];
      const Matrix& gates = cache.gates[static_cast<std::size_t>(l)];
      Matrix dz_all(steps, 4 * d);
      Vector dh_carry = Vector::Zero(d);
      Vector dc_carry = Vector::Zero(d);
      for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const Vector dh = dcur.row(t).transpose() + dh_carry;
        const auto gi = gates.row(t).segment(0, d).transpose().array();
        const auto gf = gates.row(t).segment(d, d).transpose().array();
        const auto gg = gates.row(t).segment(2 * d, d).transpose().array();
        const auto go = gates.row(t).segment(3 * d, d).transpose().array();
        const Eigen::ArrayXd tc =
            cells.row(t).transpose().array().unaryExpr(
                [](double v) { return std::tanh(v); });
        const Eigen::ArrayXd c_prev =
            (t > 0) ? Eigen::ArrayXd(cells.row(t - 1).transpose().array())
                    : Eigen::ArrayXd(Eigen::ArrayXd::Zero(d));
        const Eigen::ArrayXd dc =
            dc_carry.array() + dh.array() * go * (1.0 - tc * tc);
        Vector dz(4 * d);
        dz.segment(0, d) = (dc * gg) * gi * (1.0 - gi);
        dz.segment(d, d) = (dc * c_prev) * gf * (1.0 - gf);
        dz.segment(2 * d, d) = (dc * gi) * (1.0 - gg * gg);
        dz.segment(3 * d, d) = (dh.array() * tc) * go * (1.0 - go);
        dz_all.row(t) = dz.transpose();
        dh_carry.noalias() = cell->w_h.value.transpose() * dz;
        dc_carry = (dc * gf).matrix();
      }
      // Batched parameter updates over the whole sequence.
      cell->w_x.grad.noalias() += dz_all.transpose() * layer_inputs;
      Matrix h_prev(steps, d);
      h_prev.row(0).setZero();
      if (steps > 1) h_prev.bottomRows(steps - 1) = states.topRows(steps - 1);
      cell->w_h.grad.noalias() += dz_all.transpose() * h_prev;
      cell->b.grad.col(0) += dz_all.colwise().sum().transpose();
      dinputs.noalias() = dz_all * cell->w_x.value;
    } else {
      auto& layer = std::get<ReservoirLayer>(stack[static_cast<std::size_t>(l)]);
      const Matrix& res_pre = cache.res_pre[static_cast<std::size_t>(l)];
      const Matrix& in_pre = cache.in_pre[static_cast<std::size_t>(l)];
      const double rho = layer.rho_value();
      const double gamma = layer.gamma_value();
      Matrix da_all(steps, d);
      Vector dh_carry = Vector::Zero(d);
      double drho = 0.0;
      double dgamma = 0.0;
      for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const Vector dh = dcur.row(t).transpose() + dh_carry;
        const auto h = states.row(t).transpose().array();
        const Vector da = (dh.array() * (1.0 - h * h)).matrix();
        drho += da.dot(res_pre.row(t).transpose());
        dgamma += da.dot(in_pre.row(t).transpose());
        dh_carry.noalias() = rho * (layer.w_res.transpose() * da);
        da_all.row(t) = da.transpose();
      }
      layer.rho.grad(0, 0) += drho;
      layer.gamma.grad(0, 0) += dgamma;
      dinputs.noalias() = gamma * (da_all * layer.w_in);
    }
    dcur = std::move(dinputs);
  }
  return dcur;
}

namespace {

std::vector<StackLayer> build_stack(const std::vector<LayerSpec>& specs,
                                    int in_dim, const ModelConfig& cfg,
                                    std::uint64_t label_base,
                                    const std::string& prefix) {
  std::vector<StackLayer> stack;
  stack.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    if (spec.dim <= 0)
      throw ConfigError("build_model: layer dims must be positive");
    const std::string name = prefix + std::to_string(i);
    if (spec.kind == LayerKind::kTrainableLstm) {
      Prng rng(derive_seed(cfg.master_seed,
                           label_base + static_cast<std::uint64_t>(i)));
      LstmCell cell = make_lstm_cell(in_dim, spec.dim, rng);
      cell.w_x.name = name + ".w_x";
      cell.w_h.name = name + ".w_h";
      cell.b.name = name + ".b";
      stack.emplace_back(std::move(cell));
    } else {
      ReservoirConfig rc;
      rc.state_dim = spec.dim;
      rc.input_dim = in_dim;
      rc.sparsity = cfg.esn_sparsity;
      rc.seed = derive_seed(cfg.master_seed,
                            label_base + static_cast<std::uint64_t>(i));
      rc.normalize_radius = true;
      ReservoirLayer layer = generate_reservoir(rc);
      layer.rho.name = name + ".rho";
      layer.gamma.name = name + ".gamma";
      stack.emplace_back(std::move(layer));
    }
    in_dim = spec.dim;
  }
  return stack;
}

struct StackState {
  std::vector<Vector> h;
  std::vector<Vector> c;
};

StackState make_stack_state(const std::vector<StackLayer>& stack) {
  StackState st;
  st.h.reserve(stack.size());
  st.c.reserve(stack.size());
  for (const auto& layer : stack) {
    st.h.push_back(Vector::Zero(layer_state_dim(layer)));
    st.c.push_back(Vector::Zero(layer_state_dim(layer)));
  }
  return st;
}

Vector stack_step_single(const std::vector<StackLayer>& stack, StackState& st,
                         const Vector& x0) {
  Vector x = x0;
  for (std::size_t l = 0; l < stack.size(); ++l) {
    if (const auto* cell = std::get_if<LstmCell>(&stack[l])) {
      auto out = cell->forward({st.h[l], st.c[l]}, x);
      st.h[l] = std::move(out.h);
      st.c[l] = std::move(out.c);
    } else {
      st.h[l] = esn_step(std::get<ReservoirLayer>(stack[l]), st.h[l], x);
    }
    x = st.h[l];
  }
  return x;
}

}  // namespace

std::vector<Tensor*> TransducerModel::trainable_tensors() {
  std::vector<Tensor*> out;
  out.push_back(&embedding);
  auto add_stack = [&out](std::vector<StackLayer>& stack) {
    for (auto& layer : stack) {
      if (auto* cell = std::get_if<LstmCell>(&layer)) {
        out.push_back(&cell->w_x);
        out.push_back(&cell->w_h);
        out.push_back(&cell->b);
      } else {
        auto& esn = std::get<ReservoirLayer>(layer);
        out.push_back(&esn.rho);
        out.push_back(&esn.gamma);
      }
    }
  };
  add_stack(encoder);
  add_stack(decoder);
  out.push_back(&w_enc);
  out.push_back(&w_dec);
  out.push_back(&joint_bias);
  out.push_back(&w_out);
  return out;
}

std::vector<const Tensor*> TransducerModel::trainable_tensors() const {
  auto mutable_list = const_cast<TransducerModel*>(this)->trainable_tensors();
  return {mutable_list.begin(), mutable_list.end()};
}

void TransducerModel::zero_grads() {
  for (Tensor* t : trainable_tensors()) t->zero_grad();
}

std::vector<TensorInfo> model_tensor_info(const TransducerModel& model) {
  std::vector<TensorInfo> out;
  auto add_dense = [&out](const Tensor& t) {
    out.push_back({t.name, t.value.rows(), t.value.cols(), t.size(),
                   t.trainable, false});
  };
  add_dense(model.embedding);
  auto add_stack = [&](const std::vector<StackLayer>& stack,
                       const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
      const std::string name = prefix + std::to_string(i);
      if (const auto* cell = std::get_if<LstmCell>(&stack[i])) {
        add_dense(cell->w_x);
        add_dense(cell->w_h);
        add_dense(cell->b);
      } else {
        const auto& esn = std::get<ReservoirLayer>(stack[i]);
        out.push_back({name + ".w_res", esn.w_res.rows(), esn.w_res.cols(),
                       esn.w_res.nonZeros(), false, true});
        out.push_back({name + ".w_in", esn.w_in.rows(), esn.w_in.cols(),
                       esn.w_in.nonZeros(), false, true});
        add_dense(esn.rho);
        add_dense(esn.gamma);
      }
    }
  };
  add_stack(model.encoder, "enc");
  add_stack(model.decoder, "dec");
  add_dense(model.w_enc);
  add_dense(model.w_dec);
  add_dense(model.joint_bias);
  add_dense(model.w_out);
  return out;
}

TransducerModel build_model(const ModelConfig& cfg) {
  if (cfg.encoder_layers.empty() || cfg.decoder_layers.empty())
    throw ConfigError("build_model: need at least one encoder and one decoder layer");
  if (cfg.vocab_size < 1) throw ConfigError("build_model: vocab_size must be >= 1");
  if (cfg.feature_dim < 1) throw ConfigError("build_model: feature_dim must be >= 1");
  if (cfg.joint_dim < 1) throw ConfigError("build_model: joint_dim must be >= 1");
  if (cfg.subsample_factor < 1)
    throw ConfigError("build_model: subsample_factor must be >= 1");

  TransducerModel m;
  m.config = cfg;
  Prng master(cfg.master_seed);

  const int embed_dim = cfg.decoder_layers.front().dim;
  m.embedding = Tensor("embedding", cfg.vocab_size + 1, embed_dim);
  {
    Prng rng = master.split(kStreamEmbedding);
    const double k = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    fill_uniform(m.embedding.value, -k, k, rng);
  }

  m.encoder = build_stack(cfg.encoder_layers,
                          cfg.feature_dim * cfg.subsample_factor, cfg,
                          kStreamEncLayer, "enc");
  m.decoder = build_stack(cfg.decoder_layers, embed_dim, cfg, kStreamDecLayer,
                          "dec");

  const int enc_top = cfg.encoder_layers.back().dim;
  const int dec_top = cfg.decoder_layers.back().dim;
  m.w_enc = Tensor("joint.w_enc", cfg.joint_dim, enc_top);
  m.w_dec = Tensor("joint.w_dec", cfg.joint_dim, dec_top);
  m.joint_bias = Tensor("joint.b", cfg.joint_dim, 1);
  m.w_out = Tensor("joint.w_out", cfg.vocab_size + 1, cfg.joint_dim);
  {
    Prng rng = master.split(kStreamJointEnc);
    fill_uniform(m.w_enc.value, -1.0 / std::sqrt(double(enc_top)),
                 1.0 / std::sqrt(double(enc_top)), rng);
  }
  {
    Prng rng = master.split(kStreamJointDec);
    fill_uniform(m.w_dec.value, -1.0 / std::sqrt(double(dec_top)),
                 1.0 / std::sqrt(double(dec_top)), rng);
  }
  {
    Prng rng = master.split(kStreamJointOut);
    fill_uniform(m.w_out.value, -1.0 / std::sqrt(double(cfg.joint_dim)),
                 1.0 / std::sqrt(double(cfg.joint_dim)), rng);
  }
  return m;
}

Matrix stack_frames(const Matrix& frames, int factor) {
  if (factor < 1) throw ConfigError("stack_frames: factor must be >= 1");
  const Eigen::Index out_rows = frames.rows() / factor;
  Matrix out(out_rows, frames.cols() * factor);
  for (Eigen::Index t = 0; t < out_rows; ++t)
    for (int j = 0; j < factor; ++j)
      out.block(t, j * frames.cols(), 1, frames.cols()) =
          frames.row(t * factor + j);
  return out;
}

Vector joint(const TransducerModel& m, const Vector& enc_t, const Vector& dec_u) {
  if (enc_t.size() != m.w_enc.value.cols())
    throw ShapeError("joint: encoder vector has wrong width");
  if (dec_u.size() != m.w_dec.value.cols())
    throw ShapeError("joint: decoder vector has wrong width");
  const Vector z =
      m.w_enc.value * enc_t + m.w_dec.value * dec_u + m.joint_bias.value.col(0);
  return m.w_out.value * elem_tanh(z);
}

LogitLattice model_forward(const TransducerModel& m, const Matrix& frames,
                           const std::vector<int>& labels, ForwardCache* cache) {
  if (frames.rows() == 0) throw EmptyInputError("model_forward: no frames");
  if (frames.cols() != m.config.feature_dim)
    throw ShapeError("model_forward: frame width " +
                     std::to_string(frames.cols()) + " != feature_dim " +
                     std::to_string(m.config.feature_dim));
  check_labels(labels, m.config.vocab_size);

  const Matrix stacked = stack_frames(frames, m.config.subsample_factor);
  if (stacked.rows() == 0)
    throw EmptyInputError("model_forward: fewer frames than subsample factor");

  const Matrix enc_states =
      run_stack(m.encoder, stacked, cache ? &cache->enc : nullptr);

  const int U = static_cast<int>(labels.size());
  Matrix dec_inputs(U + 1, m.embed_dim());
  dec_inputs.row(0) = m.embedding.value.row(0);
  for (int u = 1; u <= U; ++u)
    dec_inputs.row(u) =
        m.embedding.value.row(labels[static_cast<std::size_t>(u - 1)]);
  const Matrix dec_states =
      run_stack(m.decoder, dec_inputs, cache ? &cache->dec : nullptr);

  const int T = static_cast<int>(stacked.rows());
  const Matrix p = m.w_enc.value * enc_states.transpose();  // joint x T
  const Matrix q = m.w_dec.value * dec_states.transpose();  // joint x (U+1)
  Matrix act(m.config.joint_dim, T * (U + 1));
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u)
      act.col(t * (U + 1) + u) = p.col(t) + q.col(u) + m.joint_bias.value.col(0);
  act = elem_tanh(act);

  LogitLattice lat;
  lat.num_frames = T;
  lat.label_len = U;
  lat.vocab = m.config.vocab_size;
  lat.logits = m.w_out.value * act;
  if (cache) {
    cache->joint_act = std::move(act);
    cache->labels = labels;
  }
  return lat;
}

void model_backward(TransducerModel& m, const ForwardCache& cache,
                    const Matrix& dlogits) {
  const Matrix& act = cache.joint_act;
  if (dlogits.rows() != m.w_out.value.rows() || dlogits.cols() != act.cols())
    throw ShapeError("model_backward: dlogits shape does not match cache");
  const int U = static_cast<int>(cache.labels.size());
  const int T = static_cast<int>(act.cols()) / (U + 1);

  m.w_out.grad.noalias() += dlogits * act.transpose();
  const Matrix da = m.w_out.value.transpose() * dlogits;
  const Matrix dz = (da.array() * (1.0 - act.array().square())).matrix();
  m.joint_bias.grad.col(0) += dz.rowwise().sum();

  Matrix dp = Matrix::Zero(m.config.joint_dim, T);
  Matrix dq = Matrix::Zero(m.config.joint_dim, U + 1);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      dp.col(t) += dz.col(t * (U + 1) + u);
      dq.col(u) += dz.col(t * (U + 1) + u);
    }

  const Matrix& enc_states = cache.enc.states.back();
  const Matrix& dec_states = cache.dec.states.back();
  m.w_enc.grad.noalias() += dp * enc_states;
  m.w_dec.grad.noalias() += dq * dec_states;

  Matrix denc = (m.w_enc.value.transpose() * dp).transpose();  // T x enc_top
  Matrix ddec = (m.w_dec.value.transpose() * dq).transpose();  // (U+1) x dec_top

  const Matrix ddec_inputs =
      run_stack_backward(m.decoder, cache.dec, std::move(ddec));
  m.embedding.grad.row(0) += ddec_inputs.row(0);
  for (int u = 1; u <= U; ++u)
    m.embedding.grad.row(cache.labels[static_cast<std::size_t>(u - 1)]) +=
        ddec_inputs.row(u);

  run_stack_backward(m.encoder, cache.enc, std::move(denc));
}

LossResult transducer_loss(const LogitLattice& lat,
                           const std::vector<int>& labels) {
  const int T = lat.num_frames;
  const int U = lat.label_len;
  const int V = lat.vocab;
  if (T < 1) throw EmptyInputError("transducer_loss: lattice has no frames");
  if (static_cast<int>(labels.size()) != U)
    throw ShapeError("transducer_loss: labels length != lattice label_len");
  check_labels(labels, V);
  if (lat.logits.rows() != V + 1 ||
      lat.logits.cols() != static_cast<Eigen::Index>(T) * (U + 1))
    throw ShapeError("transducer_loss: logits shape inconsistent with lattice");

  // Per-node log-softmax.
  Matrix lp = lat.logits;
  for (Eigen::Index c = 0; c < lp.cols(); ++c) {
    const double mx = lp.col(c).maxCoeff();
    const double lse =
        mx + std::log((lp.col(c).array() - mx).exp().sum());
    lp.col(c).array() -= lse;
  }
  auto col = [U](int t, int u) { return t * (U + 1) + u; };

  Matrix alpha = Matrix::Constant(T, U + 1, kNegInf);
  alpha(0, 0) = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      const double from_blank =
          t > 0 ? alpha(t - 1, u) + lp(0, col(t - 1, u)) : kNegInf;
      const double from_label =
          u > 0 ? alpha(t, u - 1) +
                      lp(labels[static_cast<std::size_t>(u - 1)], col(t, u - 1))
                : kNegInf;
      alpha(t, u) = lse2(from_blank, from_label);
    }
  }
  const double logp = alpha(T - 1, U) + lp(0, col(T - 1, U));

  Matrix beta = Matrix::Constant(T, U + 1, kNegInf);
  beta(T - 1, U) = lp(0, col(T - 1, U));
  for (int t = T - 1; t >= 0; --t) {
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      const double via_blank =
          t < T - 1 ? lp(0, col(t, u)) + beta(t + 1, u) : kNegInf;
      const double via_label =
          u < U ? lp(labels[static_cast<std::size_t>(u)], col(t, u)) +
                      beta(t, u + 1)
                : kNegInf;
      beta(t, u) = lse2(via_blank, via_label);
    }
  }

  // Transition occupancies give the gradient in log-prob space; the final
  // blank at (T-1, U) has an empty suffix (contribution 0 in log space).
  Matrix g = Matrix::Zero(V + 1, static_cast<Eigen::Index>(T) * (U + 1));
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      const int c = col(t, u);
      double blank_dest = kNegInf;
      if (t < T - 1)
        blank_dest = beta(t + 1, u);
      else if (u == U)
        blank_dest = 0.0;
      if (blank_dest != kNegInf)
        g(0, c) = -std::exp(alpha(t, u) + lp(0, c) + blank_dest - logp);
      if (u < U) {
        const int tok = labels[static_cast<std::size_t>(u)];
        g(tok, c) = -std::exp(alpha(t, u) + lp(tok, c) + beta(t, u + 1) - logp);
      }
    }
  }

  // Chain through the log-softmax.
  LossResult result;
  result.loss = -logp;
  result.dlogits = Matrix(V + 1, lp.cols());
  for (Eigen::Index c = 0; c < lp.cols(); ++c) {
    const double s = g.col(c).sum();
    result.dlogits.col(c) =
        g.col(c) - (lp.col(c).array().exp() * s).matrix();
  }
  return result;
}

namespace {

void enumerate_paths(const Matrix& prob, const std::vector<int>& labels, int T,
                     int U, int t, int u, double p, double& total) {
  const int c = t * (U + 1) + u;
  if (u < U)
    enumerate_paths(prob, labels, T, U, t, u + 1,
                    p * prob(labels[static_cast<std::size_t>(u)], c), total);
  if (t < T - 1)
    enumerate_paths(prob, labels, T, U, t + 1, u, p * prob(0, c), total);
  else if (u == U)
    total += p * prob(0, c);
}

}  // namespace

double brute_force_loss(const LogitLattice& lat, const std::vector<int>& labels) {
  const int T = lat.num_frames;
  const int U = lat.label_len;
  const int V = lat.vocab;
  if (T < 1) throw EmptyInputError("brute_force_loss: lattice has no frames");
  if (static_cast<int>(labels.size()) != U)
    throw ShapeError("brute_force_loss: labels length != lattice label_len");
  check_labels(labels, V);
  if (T + U > 12)
    throw OracleTooLargeError("brute_force_loss: T + U = " +
                              std::to_string(T + U) + " exceeds 12");

  // Direct probability-space softmax; enumeration never touches the
  // forward-backward recursion.
  Matrix prob(V + 1, lat.logits.cols());
  for (Eigen::Index c = 0; c < prob.cols(); ++c) {
    const Eigen::ArrayXd shifted =
        (lat.logits.col(c).array() - lat.logits.col(c).maxCoeff()).exp();
    prob.col(c) = (shifted / shifted.sum()).matrix();
  }
  double total = 0.0;
  enumerate_paths(prob, labels, T, U, 0, 0, 1.0, total);
  return -std::log(total);
}

std::vector<int> greedy_decode(const TransducerModel& m, const Matrix& frames,
                               int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1)
    throw ConfigError("greedy_decode: max_symbols_per_frame must be >= 1");
  if (frames.rows() == 0) throw EmptyInputError("greedy_decode: no frames");
  if (frames.cols() != m.config.feature_dim)
    throw ShapeError("greedy_decode: frame width != feature_dim");

  const Matrix stacked = stack_frames(frames, m.config.subsample_factor);
  if (stacked.rows() == 0)
    throw EmptyInputError("greedy_decode: fewer frames than subsample factor");
  const Matrix enc_states = run_stack(m.encoder, stacked, nullptr);

  StackState dec = make_stack_state(m.decoder);
  Vector dec_out =
      stack_step_single(m.decoder, dec, m.embedding.value.row(0).transpose());

  std::vector<int> out;
  for (Eigen::Index t = 0; t < enc_states.rows(); ++t) {
    const Vector enc_t = enc_states.row(t).transpose();
    for (int k = 0; k < max_symbols_per_frame; ++k) {
      const Vector logits = joint(m, enc_t, dec_out);
      int best = 0;
      for (int v = 1; v <= m.config.vocab_size; ++v)
        if (logits[v] > logits[best]) best = v;
      if (best == 0) break;
      out.push_back(best);
      dec_out = stack_step_single(m.decoder, dec,
                                  m.embedding.value.row(best).transpose());
    }
  }
  return out;
}

}  // namespace esrm

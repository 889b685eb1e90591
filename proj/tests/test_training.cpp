#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "esrm/training.hpp"
#include "test_support.hpp"

using namespace esrm;

namespace {

ModelConfig dim4_config(const std::string& wiring, std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.joint_dim = 4;
  cfg.vocab_size = 3;
  cfg.subsample_factor = 1;
  cfg.master_seed = seed;
  const LayerSpec lstm{LayerKind::kTrainableLstm, 4};
  const LayerSpec esn{LayerKind::kEsn, 4};
  if (wiring == "baseline") {
    cfg.encoder_layers = {lstm, lstm};
    cfg.decoder_layers = {lstm, lstm};
  } else if (wiring == "rnnt-d") {
    cfg.encoder_layers = {lstm, lstm};
    cfg.decoder_layers = {esn, esn};
  } else {
    cfg.encoder_layers = {esn, esn};
    cfg.decoder_layers = {lstm, lstm};
  }
  return cfg;
}

std::vector<Utterance> tiny_batch(int n, std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.vocab_size = 3;
  cfg.feature_dim = 3;
  cfg.frames_per_token = 2;
  cfg.noise_sigma = 0.2;
  cfg.min_label_len = 1;
  cfg.max_label_len = 3;
  cfg.num_examples = n;
  cfg.seed = seed;
  return synth_generate(cfg).utterances;
}

std::vector<const ReservoirLayer*> reservoirs(const TransducerModel& m) {
  std::vector<const ReservoirLayer*> out;
  for (const auto* stack : {&m.encoder, &m.decoder})
    for (const auto& layer : *stack)
      if (const auto* esn = std::get_if<ReservoirLayer>(&layer))
        out.push_back(esn);
  return out;
}

}  // namespace

TEST_CASE("the optimizer refuses frozen tensors") {
  Tensor frozen("w", 2, 2, false);
  CHECK_THROWS_AS(Optimizer(OptimizerConfig{}, {&frozen}), ConfigError);
}

TEST_CASE("reservoir weights are bit-unchanged by training steps") {
  TransducerModel m = build_model(dim4_config("rnnt-d"));
  const auto before = reservoirs(m);
  std::vector<SpMat> w_res_copies, w_in_copies;
  for (const ReservoirLayer* r : before) {
    w_res_copies.push_back(r->w_res);
    w_in_copies.push_back(r->w_in);
  }
  const auto batch = tiny_batch(8);
  Optimizer opt(OptimizerConfig{}, m.trainable_tensors());
  for (int s = 0; s < 5; ++s) train_step(m, batch, opt);
  const auto after = reservoirs(m);
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(sparse_bit_equal(after[i]->w_res, w_res_copies[i]));
    CHECK(sparse_bit_equal(after[i]->w_in, w_in_copies[i]));
    CHECK(reservoir_matches_config(*after[i]));
  }
  // The scalars, by contrast, must have moved.
  for (const ReservoirLayer* r : after) {
    CHECK(r->rho_value() != 0.9);
    CHECK(r->gamma_value() != 1.0);
  }
}

TEST_CASE("a zero learning rate reports a loss but changes nothing") {
  TransducerModel m = build_model(dim4_config("rnnt-d"));
  std::vector<Matrix> before;
  for (const Tensor* t : m.trainable_tensors()) before.push_back(t->value);
  OptimizerConfig cfg;
  cfg.lr = 0.0;
  Optimizer opt(cfg, m.trainable_tensors());
  const StepReport report = train_step(m, tiny_batch(4), opt);
  CHECK(report.loss > 0.0);
  CHECK(report.grad_norm > 0.0);
  const auto params = m.trainable_tensors();
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(params[i]->value == before[i]);
}

TEST_CASE("training is deterministic to the last bit") {
  const auto data = tiny_batch(32);
  auto run = [&data]() {
    TransducerModel m = build_model(dim4_config("rnnt-d"));
    TrainLoopConfig cfg;
    cfg.steps = 20;
    cfg.batch_size = 4;
    cfg.batch_seed = 11;
    return train_loop(m, data, cfg);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].loss == b[i].loss);
    CHECK(a[i].grad_norm == b[i].grad_norm);
  }
}

TEST_CASE("a non-finite loss halts training before any update") {
  TransducerModel m = build_model(dim4_config("baseline"));
  m.w_out.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const Matrix w_enc_before = m.w_enc.value;
  Optimizer opt(OptimizerConfig{}, m.trainable_tensors());
  CHECK_THROWS_AS(train_step(m, tiny_batch(2), opt), DivergenceError);
  CHECK(m.w_enc.value == w_enc_before);
  CHECK(opt.steps() == 0);
}

TEST_CASE("gradient-carrying tensor counts follow the structural skip") {
  TransducerModel baseline = build_model(dim4_config("baseline"));
  TransducerModel rnnt_d = build_model(dim4_config("rnnt-d"));
  const int base_count = static_cast<int>(baseline.trainable_tensors().size());
  const int d_count = static_cast<int>(rnnt_d.trainable_tensors().size());
  const int dec_layers = 2;
  CHECK(d_count == base_count - 3 * dec_layers + 2 * dec_layers);

  const auto batch = tiny_batch(4);
  Optimizer opt_b(OptimizerConfig{}, baseline.trainable_tensors());
  Optimizer opt_d(OptimizerConfig{}, rnnt_d.trainable_tensors());
  CHECK(train_step(baseline, batch, opt_b).updated_tensors == base_count);
  CHECK(train_step(rnnt_d, batch, opt_d).updated_tensors == d_count);
}

TEST_CASE("analytic gradients match central differences on dim-4 models") {
  const auto batch = tiny_batch(3, 31);
  for (const std::string wiring : {"baseline", "rnnt-d", "rnnt-e"}) {
    CAPTURE(wiring);
    TransducerModel m = build_model(dim4_config(wiring));
    const auto fd = finite_diff_check(m, batch, 1e-5);
    CHECK(fd.max_rel_error <= 1e-5);
    CHECK(fd.checked_params > 0);
  }
}

TEST_CASE("the finite-difference check covers rho and gamma") {
  const auto batch = tiny_batch(3, 33);
  TransducerModel m = build_model(dim4_config("rnnt-d"));
  std::int64_t expected = 0;
  bool saw_scalar = false;
  for (const Tensor* t : m.trainable_tensors()) {
    expected += t->size();
    if (t->name.ends_with(".rho") || t->name.ends_with(".gamma")) {
      saw_scalar = true;
      CHECK(t->size() == 1);
    }
  }
  CHECK(saw_scalar);
  const auto fd = finite_diff_check(m, batch, 1e-5);
  CHECK(fd.checked_params == expected);

  // The scalars receive real gradient signal.
  m.zero_grads();
  ForwardCache cache;
  const auto& utt = batch.front();
  const LogitLattice lat = model_forward(m, utt.frames, utt.labels, &cache);
  const LossResult res = transducer_loss(lat, utt.labels);
  model_backward(m, cache, res.dlogits);
  for (const Tensor* t : m.trainable_tensors())
    if (t->name.ends_with(".rho") || t->name.ends_with(".gamma"))
      CHECK(t->grad(0, 0) != 0.0);
}

TEST_CASE("finite_diff_check refuses models beyond the perturbation budget") {
  ModelConfig cfg = dim4_config("baseline");
  cfg.encoder_layers = {{LayerKind::kTrainableLstm, 32},
                        {LayerKind::kTrainableLstm, 32}};
  cfg.decoder_layers = {{LayerKind::kTrainableLstm, 32}};
  TransducerModel m = build_model(cfg);
  CHECK_THROWS_AS(finite_diff_check(m, tiny_batch(1), 1e-5), ConfigError);
}

TEST_CASE("a quadratic readout passes the check at 1e-9") {
  Prng rng(41);
  Matrix s(20, 4), y(20, 3);
  fill_uniform(s, -1.0, 1.0, rng);
  fill_uniform(y, -1.0, 1.0, rng);
  Tensor w("readout", 4, 3);
  fill_uniform(w.value, -0.5, 0.5, rng);
  const auto loss = [&]() { return 0.5 * (s * w.value - y).squaredNorm(); };
  w.grad = s.transpose() * (s * w.value - y);
  std::vector<Tensor*> params{&w};
  const auto fd = finite_diff_against(params, loss, 1e-5);
  CHECK(fd.max_rel_error <= 1e-9);
}

TEST_CASE("ridge recovers the identity from self-targets") {
  Prng rng(43);
  Matrix s(30, 5);
  fill_uniform(s, -1.0, 1.0, rng);
  const Matrix w = ridge_readout(s, s, 0.0);
  CHECK((w - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("a huge ridge penalty shrinks the readout to zero") {
  Prng rng(45);
  Matrix s(30, 5), y(30, 2);
  fill_uniform(s, -1.0, 1.0, rng);
  fill_uniform(y, -1.0, 1.0, rng);
  const Matrix w = ridge_readout(s, y, 1e12);
  CHECK(w.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("ridge recovers a planted readout from noiseless targets") {
  Prng rng(47);
  Matrix s(40, 6), w_star(6, 3);
  fill_uniform(s, -1.0, 1.0, rng);
  fill_uniform(w_star, -1.0, 1.0, rng);
  const Matrix y = s * w_star;
  const Matrix w = ridge_readout(s, y, 1e-10);
  CHECK((w - w_star).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("an unregularized singular system is rejected") {
  Prng rng(49);
  Matrix s(20, 4);
  fill_uniform(s, -1.0, 1.0, rng);
  s.col(3) = s.col(0);  // rank deficient
  Matrix y(20, 2);
  fill_uniform(y, -1.0, 1.0, rng);
  CHECK_THROWS_AS(ridge_readout(s, y, 0.0), SingularityError);
  CHECK_NOTHROW(ridge_readout(s, y, 1e-6));
  CHECK_THROWS_AS(ridge_readout(Matrix(3, 2), Matrix(4, 2), 0.1), ShapeError);
  CHECK_THROWS_AS(ridge_readout(s, y, -1.0), ConfigError);
}

TEST_CASE("train_loop writes one JSON line per step") {
  TransducerModel m = build_model(dim4_config("rnnt-d"));
  std::ostringstream log;
  TrainLoopConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  cfg.batch_seed = 3;
  const auto reports = train_loop(m, tiny_batch(8), cfg, &log);
  CHECK(reports.size() == 5);
  std::istringstream lines(log.str());
  std::string line;
  int parsed = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("loss"));
    CHECK(j.contains("wall_ms"));
    CHECK(j.contains("grad_norm"));
    CHECK(j.contains("updated_tensors"));
    ++parsed;
  }
  CHECK(parsed == 5);
  // Loss should be trending down on this tiny problem.
  CHECK(reports.back().loss < reports.front().loss);
}

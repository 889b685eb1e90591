#include "esrm/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>

#include "esrm/persistence.hpp"

namespace esrm {

namespace {

constexpr std::uint64_t kSeedModel = 0xA11CEULL;
constexpr std::uint64_t kSeedData = 0xDA7AULL;
constexpr std::uint64_t kSeedBatches = 0xBA7CULL;
constexpr std::uint64_t kSeedLongform = 0x10F6ULL;

std::vector<LayerSpec> repeat_layers(LayerKind kind, int dim, int count) {
  return std::vector<LayerSpec>(static_cast<std::size_t>(count),
                                LayerSpec{kind, dim});
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json wer_json(const CorpusWer& w) {
  return {{"utterances", w.utterances},
          {"ref_tokens", w.ref_tokens},
          {"wer", w.rate},
          {"sub", w.counts.substitutions},
          {"ins", w.counts.insertions},
          {"del", w.counts.deletions}};
}

}  // namespace

ModelConfig make_model_config(const RunOptions& opt) {
  if (opt.enc_layers < 1 || opt.dec_layers < 1)
    throw ConfigError("need at least one encoder and one decoder layer");

  ModelConfig cfg;
  cfg.feature_dim = opt.feature_dim;
  cfg.joint_dim = opt.joint_dim;
  cfg.vocab_size = opt.vocab;
  cfg.subsample_factor = opt.subsample;
  cfg.master_seed = derive_seed(opt.seed, kSeedModel);

  const std::string& name = opt.config_name;
  if (name == "baseline") {
    cfg.encoder_layers =
        repeat_layers(LayerKind::kTrainableLstm, opt.enc_dim, opt.enc_layers);
    cfg.decoder_layers =
        repeat_layers(LayerKind::kTrainableLstm, opt.dec_dim, opt.dec_layers);
  } else if (name == "rnnt-e") {
    cfg.encoder_layers = repeat_layers(LayerKind::kEsn, opt.enc_dim, opt.enc_layers);
    cfg.decoder_layers =
        repeat_layers(LayerKind::kTrainableLstm, opt.dec_dim, opt.dec_layers);
  } else if (name == "rnnt-d") {
    cfg.encoder_layers =
        repeat_layers(LayerKind::kTrainableLstm, opt.enc_dim, opt.enc_layers);
    cfg.decoder_layers = repeat_layers(LayerKind::kEsn, opt.dec_dim, opt.dec_layers);
  } else if (name.rfind("progressive-", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(name.substr(12));
    } catch (const std::exception&) {
      throw ConfigError("bad config name '" + name + "'");
    }
    if (k < 0 || k > opt.enc_layers)
      throw ConfigError("progressive-K needs 0 <= K <= enc_layers");
    // K reservoir layers at the bottom of the encoder, trainable cells above;
    // the decoder stays reservoir-only.
    cfg.encoder_layers = repeat_layers(LayerKind::kEsn, opt.enc_dim, k);
    const auto top = repeat_layers(LayerKind::kTrainableLstm, opt.enc_dim,
                                   opt.enc_layers - k);
    cfg.encoder_layers.insert(cfg.encoder_layers.end(), top.begin(), top.end());
    cfg.decoder_layers = repeat_layers(LayerKind::kEsn, opt.dec_dim, opt.dec_layers);
  } else {
    throw ConfigError("unknown config '" + name +
                      "' (expected baseline, rnnt-e, rnnt-d, progressive-K)");
  }
  return cfg;
}

SynthConfig make_synth_config(const RunOptions& opt) {
  SynthConfig cfg;
  cfg.vocab_size = opt.vocab;
  cfg.feature_dim = opt.feature_dim;
  cfg.frames_per_token = opt.frames_per_token;
  cfg.noise_sigma = opt.sigma;
  cfg.min_label_len = opt.min_len;
  cfg.max_label_len = opt.max_len;
  cfg.num_examples = opt.train_size + opt.test_size;
  cfg.seed = derive_seed(opt.seed, kSeedData);
  return cfg;
}

DataSplits make_data(const RunOptions& opt) {
  DataSplits splits;
  splits.synth = make_synth_config(opt);
  SynthDataset ds = synth_generate(splits.synth);
  auto& utts = ds.utterances;
  splits.train.assign(utts.begin(), utts.begin() + opt.train_size);
  splits.test.assign(utts.begin() + opt.train_size, utts.end());
  return splits;
}

std::uint64_t longform_seed(const RunOptions& opt) {
  return derive_seed(derive_seed(opt.seed, kSeedData), kSeedLongform);
}

nlohmann::json resolved_config_json(const RunOptions& opt,
                                    const TransducerModel& model) {
  nlohmann::json j;
  j["config"] = opt.config_name;
  j["seed"] = opt.seed;
  j["steps"] = opt.steps;
  j["batch_size"] = opt.batch_size;
  j["lr"] = opt.lr;
  j["model"] = {{"feature_dim", model.config.feature_dim},
                {"joint_dim", model.config.joint_dim},
                {"vocab_size", model.config.vocab_size},
                {"subsample_factor", model.config.subsample_factor},
                {"master_seed", model.config.master_seed},
                {"esn_sparsity", model.config.esn_sparsity}};
  auto layer_list = [](const std::vector<LayerSpec>& layers) {
    nlohmann::json out = nlohmann::json::array();
    for (const LayerSpec& spec : layers)
      out.push_back({{"kind", spec.kind == LayerKind::kEsn ? "esn" : "lstm"},
                     {"dim", spec.dim}});
    return out;
  };
  j["model"]["encoder_layers"] = layer_list(model.config.encoder_layers);
  j["model"]["decoder_layers"] = layer_list(model.config.decoder_layers);
  j["synth"] = {{"vocab_size", opt.vocab},
                {"feature_dim", opt.feature_dim},
                {"frames_per_token", opt.frames_per_token},
                {"noise_sigma", opt.sigma},
                {"min_label_len", opt.min_len},
                {"max_label_len", opt.max_len},
                {"train_size", opt.train_size},
                {"test_size", opt.test_size},
                {"data_seed", make_synth_config(opt).seed}};
  j["longform"] = {{"utterances_per_example", opt.longform_k},
                   {"num_examples", opt.longform_size},
                   {"seed", longform_seed(opt)}};

  nlohmann::json trainable = nlohmann::json::array();
  nlohmann::json frozen = nlohmann::json::array();
  for (const TensorInfo& info : model_tensor_info(model)) {
    if (info.trainable)
      trainable.push_back(info.name);
    else
      frozen.push_back(info.name);
  }
  j["trainable_tensors"] = std::move(trainable);
  j["frozen_tensors"] = std::move(frozen);
  return j;
}

CorpusWer evaluate_corpus(const TransducerModel& model,
                          std::span<const Utterance> corpus,
                          int max_symbols_per_frame) {
  CorpusWer out;
  for (const Utterance& utt : corpus) {
    const std::vector<int> hyp =
        greedy_decode(model, utt.frames, max_symbols_per_frame);
    const WerResult w = wer(utt.labels, hyp);
    out.counts.substitutions += w.counts.substitutions;
    out.counts.insertions += w.counts.insertions;
    out.counts.deletions += w.counts.deletions;
    out.ref_tokens += static_cast<long>(utt.labels.size());
    ++out.utterances;
  }
  out.rate = out.ref_tokens > 0 ? static_cast<double>(out.counts.total()) /
                                      static_cast<double>(out.ref_tokens)
                                : 0.0;
  return out;
}

TrainOutcome cmd_train(const RunOptions& opt) {
  if (opt.out_dir.empty()) throw ConfigError("train: --out is required");
  const std::filesystem::path out_dir(opt.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("train: cannot create " + out_dir.string());

  TransducerModel model = build_model(make_model_config(opt));
  const DataSplits data = make_data(opt);

  TrainOutcome outcome;
  outcome.config_path = out_dir / "config.json";
  write_text_file(outcome.config_path,
                  resolved_config_json(opt, model).dump(2) + "\n");

  outcome.log_path = out_dir / "train_log.jsonl";
  std::ofstream log(outcome.log_path);
  if (!log) throw IoError("train: cannot open " + outcome.log_path.string());

  TrainLoopConfig loop;
  loop.steps = opt.steps;
  loop.batch_size = opt.batch_size;
  loop.batch_seed = derive_seed(opt.seed, kSeedBatches);
  loop.opt.lr = opt.lr;
  const auto reports = train_loop(model, data.train, loop, &log);

  outcome.model_path = out_dir / "model.esrm";
  save_model(model, outcome.model_path);
  outcome.final_loss = reports.empty() ? 0.0 : reports.back().loss;
  outcome.steps = static_cast<std::int64_t>(reports.size());
  return outcome;
}

EvalOutcome cmd_eval(const RunOptions& opt) {
  if (opt.model_path.empty()) throw ConfigError("eval: --model is required");
  const TransducerModel model = load_model(opt.model_path);

  std::vector<Utterance> test;
  if (!opt.data_path.empty()) {
    test = read_jsonl(opt.data_path);
  } else {
    test = make_data(opt).test;
  }
  const std::vector<Utterance> longform =
      opt.longform_size > 0
          ? concat_longform(test, opt.longform_size, opt.longform_k,
                            longform_seed(opt))
          : std::vector<Utterance>{};

  EvalOutcome outcome;
  outcome.test = evaluate_corpus(model, test);
  if (!longform.empty()) outcome.longform = evaluate_corpus(model, longform);

  outcome.report = {{"model", opt.model_path}, {"test", wer_json(outcome.test)}};
  if (!longform.empty()) outcome.report["longform"] = wer_json(outcome.longform);

  std::ostringstream table;
  table << std::left << std::setw(10) << "split" << std::right << std::setw(8)
        << "utts" << std::setw(12) << "ref_tokens" << std::setw(10) << "WER"
        << std::setw(7) << "sub" << std::setw(7) << "ins" << std::setw(7)
        << "del" << '\n';
  auto row = [&table](const std::string& name, const CorpusWer& w) {
    table << std::left << std::setw(10) << name << std::right << std::setw(8)
          << w.utterances << std::setw(12) << w.ref_tokens << std::setw(10)
          << std::fixed << std::setprecision(4) << w.rate << std::setw(7)
          << w.counts.substitutions << std::setw(7) << w.counts.insertions
          << std::setw(7) << w.counts.deletions << '\n';
  };
  row("test", outcome.test);
  if (!longform.empty()) row("longform", outcome.longform);
  outcome.table = table.str();

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text_file(std::filesystem::path(opt.out_dir) / "eval.json",
                    outcome.report.dump(2) + "\n");
  }
  return outcome;
}

BenchOutcome cmd_bench(const RunOptions& opt, const std::string& config_b,
                       std::int64_t bench_steps, int warmup_steps) {
  if (bench_steps < 1) throw ConfigError("bench: steps must be >= 1");
  const DataSplits data = make_data(opt);

  // Identical batch streams for both configurations.
  const std::int64_t total_steps = bench_steps + warmup_steps;
  std::vector<std::vector<Utterance>> batches(
      static_cast<std::size_t>(total_steps));
  Prng rng(derive_seed(opt.seed, kSeedBatches));
  for (auto& batch : batches) {
    batch.resize(static_cast<std::size_t>(opt.batch_size));
    for (auto& slot : batch) slot = data.train[rng.next_below(data.train.size())];
  }

  auto time_config = [&](const std::string& name, double& mean_ms,
                         double& std_ms, int& updated) {
    RunOptions local = opt;
    local.config_name = name;
    TransducerModel model = build_model(make_model_config(local));
    Optimizer optimizer(OptimizerConfig{}, model.trainable_tensors());
    updated = static_cast<int>(optimizer.params().size());
    std::vector<double> wall;
    wall.reserve(static_cast<std::size_t>(bench_steps));
    for (std::int64_t s = 0; s < total_steps; ++s) {
      const StepReport r = train_step(model, batches[static_cast<std::size_t>(s)],
                                      optimizer);
      if (s >= warmup_steps) wall.push_back(r.wall_ms);
    }
    double sum = 0.0;
    for (const double w : wall) sum += w;
    mean_ms = sum / static_cast<double>(wall.size());
    double var = 0.0;
    for (const double w : wall) var += (w - mean_ms) * (w - mean_ms);
    std_ms = std::sqrt(var / static_cast<double>(wall.size()));
  };

  BenchOutcome out;
  out.config_a = opt.config_name;
  out.config_b = config_b;
  time_config(opt.config_name, out.mean_ms_a, out.std_ms_a, out.updated_tensors_a);
  time_config(config_b, out.mean_ms_b, out.std_ms_b, out.updated_tensors_b);
  out.ratio = out.mean_ms_b / out.mean_ms_a;

  out.report = {{"steps", bench_steps},
                {"batch_size", opt.batch_size},
                {"a",
                 {{"config", out.config_a},
                  {"mean_ms", out.mean_ms_a},
                  {"std_ms", out.std_ms_a},
                  {"updated_tensors", out.updated_tensors_a}}},
                {"b",
                 {{"config", out.config_b},
                  {"mean_ms", out.mean_ms_b},
                  {"std_ms", out.std_ms_b},
                  {"updated_tensors", out.updated_tensors_b}}},
                {"ratio_b_over_a", out.ratio}};

  std::ostringstream table;
  table << std::left << std::setw(16) << "config" << std::right << std::setw(12)
        << "mean_ms" << std::setw(12) << "std_ms" << std::setw(18)
        << "updated_tensors" << '\n';
  auto row = [&table](const std::string& name, double mean, double sd, int upd) {
    table << std::left << std::setw(16) << name << std::right << std::setw(12)
          << std::fixed << std::setprecision(3) << mean << std::setw(12) << sd
          << std::setw(18) << upd << '\n';
  };
  row(out.config_a, out.mean_ms_a, out.std_ms_a, out.updated_tensors_a);
  row(out.config_b, out.mean_ms_b, out.std_ms_b, out.updated_tensors_b);
  table << "step-time ratio (" << out.config_b << " / " << out.config_a
        << "): " << std::fixed << std::setprecision(3) << out.ratio << '\n';
  out.table = table.str();

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text_file(std::filesystem::path(opt.out_dir) / "bench.json",
                    out.report.dump(2) + "\n");
  }
  return out;
}

InspectOutcome cmd_inspect(const RunOptions& opt) {
  if (opt.model_path.empty()) throw ConfigError("inspect: --model is required");
  TransducerModel model = load_model(opt.model_path);
  const ModelFileLayout layout = model_file_layout(model);
  const auto file_size = std::filesystem::file_size(opt.model_path);

  std::ostringstream text;
  text << "model file: " << opt.model_path << " (" << file_size << " bytes)\n";
  text << "layout: header " << layout.header << " + reservoir blocks "
       << layout.esn_blocks << " + tensors " << layout.tensor_bytes << " + crc "
       << layout.crc << "\n\n";

  text << std::left << std::setw(16) << "tensor" << std::setw(12) << "shape"
       << std::right << std::setw(12) << "params" << "  status\n";
  std::int64_t trainable_total = 0;
  std::int64_t frozen_nonzeros = 0;
  nlohmann::json tensors = nlohmann::json::array();
  for (const TensorInfo& info : model_tensor_info(model)) {
    std::ostringstream shape;
    shape << info.rows << "x" << info.cols;
    text << std::left << std::setw(16) << info.name << std::setw(12)
         << shape.str() << std::right << std::setw(12) << info.stored_params
         << "  " << (info.trainable ? "trainable" : "frozen")
         << (info.sparse ? " (sparse)" : "") << '\n';
    if (info.trainable)
      trainable_total += info.stored_params;
    else
      frozen_nonzeros += info.stored_params;
    tensors.push_back({{"name", info.name},
                       {"rows", info.rows},
                       {"cols", info.cols},
                       {"params", info.stored_params},
                       {"trainable", info.trainable},
                       {"sparse", info.sparse}});
  }
  text << "\ntrainable parameters: " << trainable_total
       << "; frozen reservoir nonzeros: " << frozen_nonzeros << '\n';

  nlohmann::json reservoirs = nlohmann::json::array();
  auto describe_stack = [&](const std::vector<StackLayer>& stack,
                            const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
      if (const auto* esn = std::get_if<ReservoirLayer>(&stack[i])) {
        const double radius = estimate_spectral_radius(esn->w_res);
        const std::int64_t equivalent = param_count(
            CellKind::kSimpleRnn, esn->input_dim(), esn->state_dim());
        text << prefix << i << ": radius(w_res) = " << std::setprecision(8)
             << radius << ", rho = " << esn->rho_value()
             << ", gamma = " << esn->gamma_value()
             << ", dense-equivalent params = " << equivalent << '\n';
        reservoirs.push_back({{"layer", prefix + std::to_string(i)},
                              {"radius", radius},
                              {"rho", esn->rho_value()},
                              {"gamma", esn->gamma_value()},
                              {"dense_equivalent_params", equivalent}});
      } else {
        const auto& cell = std::get<LstmCell>(stack[i]);
        text << prefix << i << ": lstm, params = "
             << param_count(CellKind::kLstm, cell.input_dim, cell.state_dim)
             << '\n';
      }
    }
  };
  text << '\n';
  describe_stack(model.encoder, "enc");
  describe_stack(model.decoder, "dec");

  InspectOutcome out;
  out.text = text.str();
  out.report = {{"model", opt.model_path},
                {"file_bytes", file_size},
                {"layout",
                 {{"header", layout.header},
                  {"esn_blocks", layout.esn_blocks},
                  {"tensor_bytes", layout.tensor_bytes},
                  {"crc", layout.crc},
                  {"total", layout.total}}},
                {"trainable_params", trainable_total},
                {"frozen_nonzeros", frozen_nonzeros},
                {"tensors", std::move(tensors)},
                {"reservoirs", std::move(reservoirs)}};
  return out;
}

GenDataOutcome cmd_gen_data(const RunOptions& opt) {
  if (opt.out_dir.empty()) throw ConfigError("gen-data: --out is required");
  const std::filesystem::path out_dir(opt.out_dir);
  std::filesystem::create_directories(out_dir);
  const DataSplits data = make_data(opt);

  GenDataOutcome out;
  out.train_path = out_dir / "train.jsonl";
  out.test_path = out_dir / "test.jsonl";
  write_jsonl(data.train, out.train_path);
  write_jsonl(data.test, out.test_path);
  if (opt.longform_size > 0) {
    out.longform_path = out_dir / "longform.jsonl";
    write_jsonl(concat_longform(data.test, opt.longform_size, opt.longform_k,
                                longform_seed(opt)),
                out.longform_path);
  }
  return out;
}

}  // namespace esrm

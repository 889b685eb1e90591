// Experiment driver behind the command-line tool: data preparation, the four
// wiring presets, training/eval/bench/inspect commands, and report formats.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "esrm/data.hpp"
#include "esrm/training.hpp"
#include "esrm/transducer.hpp"

namespace esrm {

// Everything a run needs, resolved from flags. Serialized next to outputs.
struct RunOptions {
  std::string config_name = "baseline";  // baseline|rnnt-e|rnnt-d|progressive-K
  std::uint64_t seed = 1;
  std::int64_t steps = 2000;
  int batch_size = 16;
  double lr = 1e-3;

  int enc_layers = 2;
  int dec_layers = 2;
  int enc_dim = 64;
  int dec_dim = 64;
  int joint_dim = 64;
  int subsample = 3;

  int vocab = 16;
  int feature_dim = 16;
  int frames_per_token = 3;
  double sigma = 0.3;
  int min_len = 4;
  int max_len = 8;
  int train_size = 5000;
  int test_size = 500;

  int longform_k = 10;     // utterances concatenated per long example
  int longform_size = 50;  // number of long examples

  std::string out_dir;
  std::string model_path;  // eval/inspect input
  std::string data_path;   // optional JSONL dataset for eval
};

// Layer wiring for the four presets; "progressive-K" keeps the decoder
// reservoir-only and leaves K encoder layers as reservoirs.
ModelConfig make_model_config(const RunOptions& opt);

SynthConfig make_synth_config(const RunOptions& opt);

struct DataSplits {
  SynthConfig synth;
  std::vector<Utterance> train;
  std::vector<Utterance> test;
};
// One generation pass shared by train and test so both splits use the same
// token embeddings.
DataSplits make_data(const RunOptions& opt);

std::uint64_t longform_seed(const RunOptions& opt);

nlohmann::json resolved_config_json(const RunOptions& opt,
                                    const TransducerModel& model);

struct CorpusWer {
  int utterances = 0;
  long ref_tokens = 0;
  EditCounts counts;
  double rate = 0.0;
};
CorpusWer evaluate_corpus(const TransducerModel& model,
                          std::span<const Utterance> corpus,
                          int max_symbols_per_frame = 4);

struct TrainOutcome {
  std::filesystem::path model_path;
  std::filesystem::path log_path;
  std::filesystem::path config_path;
  double final_loss = 0.0;
  std::int64_t steps = 0;
};
TrainOutcome cmd_train(const RunOptions& opt);

struct EvalOutcome {
  CorpusWer test;
  CorpusWer longform;
  nlohmann::json report;
  std::string table;
};
EvalOutcome cmd_eval(const RunOptions& opt);

struct BenchOutcome {
  std::string config_a, config_b;
  double mean_ms_a = 0.0, std_ms_a = 0.0;
  double mean_ms_b = 0.0, std_ms_b = 0.0;
  double ratio = 0.0;  // b / a
  int updated_tensors_a = 0, updated_tensors_b = 0;
  nlohmann::json report;
  std::string table;
};
// Times train_step for two wirings on identical batch streams.
BenchOutcome cmd_bench(const RunOptions& opt, const std::string& config_b,
                       std::int64_t bench_steps, int warmup_steps = 5);

struct InspectOutcome {
  std::string text;
  nlohmann::json report;
};
InspectOutcome cmd_inspect(const RunOptions& opt);

struct GenDataOutcome {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path longform_path;  // empty if longform_size == 0
};
GenDataOutcome cmd_gen_data(const RunOptions& opt);

}  // namespace esrm

// Command-line driver: gen-data, train, eval, bench, inspect.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "esrm/cli.hpp"
#include "esrm/errors.hpp"

namespace {

// Exit codes: 0 ok, 2 config/usage, 3 divergence, 4 I/O, 5 corruption.
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitCorruption = 5;

void add_model_flags(CLI::App* cmd, esrm::RunOptions& opt) {
  cmd->add_option("--config", opt.config_name,
                  "baseline | rnnt-e | rnnt-d | progressive-K");
  cmd->add_option("--enc-dim", opt.enc_dim, "encoder layer width");
  cmd->add_option("--dec-dim", opt.dec_dim, "decoder layer width");
  cmd->add_option("--enc-layers", opt.enc_layers, "encoder depth");
  cmd->add_option("--dec-layers", opt.dec_layers, "decoder depth");
  cmd->add_option("--joint-dim", opt.joint_dim, "joint network width");
  cmd->add_option("--subsample", opt.subsample, "frame-stacking factor");
}

void add_data_flags(CLI::App* cmd, esrm::RunOptions& opt) {
  cmd->add_option("--vocab", opt.vocab, "vocabulary size (blank excluded)");
  cmd->add_option("--feature-dim", opt.feature_dim, "frame feature width");
  cmd->add_option("--frames-per-token", opt.frames_per_token,
                  "frames emitted per token");
  cmd->add_option("--sigma", opt.sigma, "frame noise stddev");
  cmd->add_option("--min-len", opt.min_len, "min label length");
  cmd->add_option("--max-len", opt.max_len, "max label length");
  cmd->add_option("--train-size", opt.train_size, "training utterances");
  cmd->add_option("--test-size", opt.test_size, "held-out utterances");
  cmd->add_option("--longform-k", opt.longform_k,
                  "utterances concatenated per long example");
  cmd->add_option("--longform-size", opt.longform_size,
                  "number of long-form examples");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"esrm: sequence transduction with frozen random reservoirs"};
  app.require_subcommand(1);

  esrm::RunOptions opt;
  std::string bench_config_b = "rnnt-d";
  std::int64_t bench_steps = 100;
  int bench_warmup = 5;

  app.add_option("--seed", opt.seed, "run seed (data, init, batches derive from it)");

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset as JSON-lines");
  gen->add_option("--out", opt.out_dir, "output directory")->required();
  add_data_flags(gen, opt);

  CLI::App* train = app.add_subcommand("train", "train one wiring to a step budget");
  train->add_option("--out", opt.out_dir, "output directory")->required();
  train->add_option("--steps", opt.steps, "training steps");
  train->add_option("--batch", opt.batch_size, "batch size");
  train->add_option("--lr", opt.lr, "learning rate");
  add_model_flags(train, opt);
  add_data_flags(train, opt);

  CLI::App* eval = app.add_subcommand("eval", "token error rates on held-out and long-form splits");
  eval->add_option("--model", opt.model_path, "model file")->required();
  eval->add_option("--out", opt.out_dir, "optional output directory for eval.json");
  eval->add_option("--data", opt.data_path, "optional JSONL test set");
  add_data_flags(eval, opt);

  CLI::App* bench = app.add_subcommand("bench", "compare train-step wall time of two wirings");
  bench->add_option("--out", opt.out_dir, "optional output directory for bench.json");
  bench->add_option("--config-b", bench_config_b, "second wiring (first from --config)");
  bench->add_option("--steps", bench_steps, "timed steps per wiring");
  bench->add_option("--warmup", bench_warmup, "untimed warmup steps");
  bench->add_option("--batch", opt.batch_size, "batch size");
  add_model_flags(bench, opt);
  add_data_flags(bench, opt);

  CLI::App* inspect = app.add_subcommand("inspect", "summarize a model file");
  inspect->add_option("--model", opt.model_path, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto out = esrm::cmd_gen_data(opt);
      std::cout << "wrote " << out.train_path << ", " << out.test_path;
      if (!out.longform_path.empty()) std::cout << ", " << out.longform_path;
      std::cout << '\n';
    } else if (train->parsed()) {
      const auto out = esrm::cmd_train(opt);
      std::cout << "trained " << opt.config_name << " for " << out.steps
                << " steps; final loss " << out.final_loss << '\n'
                << "model: " << out.model_path << '\n'
                << "log:   " << out.log_path << '\n';
    } else if (eval->parsed()) {
      const auto out = esrm::cmd_eval(opt);
      std::cout << out.table;
    } else if (bench->parsed()) {
      const auto out = esrm::cmd_bench(opt, bench_config_b, bench_steps, bench_warmup);
      std::cout << out.table;
    } else if (inspect->parsed()) {
      const auto out = esrm::cmd_inspect(opt);
      std::cout << out.text;
    }
  } catch (const esrm::CorruptionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCorruption;
  } catch (const esrm::UnsupportedVersionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCorruption;
  } catch (const esrm::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const esrm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const esrm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

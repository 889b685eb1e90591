// Seeded synthetic frames-to-tokens corpus, long-form concatenation, and the
// token error rate metric.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esrm/numerics.hpp"

namespace esrm {

struct SynthConfig {
  int vocab_size = 16;      // tokens are 1..vocab_size; 0 is reserved
  int feature_dim = 16;
  int frames_per_token = 3;
  double noise_sigma = 0.3;
  int min_label_len = 4;
  int max_label_len = 8;
  int num_examples = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Utterance {
  Matrix frames;            // (frames_per_token * labels.size()) x feature_dim
  std::vector<int> labels;  // tokens in [1, vocab_size]
  std::string id;
};

struct SynthDataset {
  SynthConfig config;
  Matrix embeddings;  // (vocab_size + 1) x feature_dim; row 0 unused
  std::vector<Utterance> utterances;
};

// Token embeddings are drawn once per dataset seed; an utterance repeats each
// of its tokens' embeddings frames_per_token times and adds Gaussian noise.
// Fully deterministic per (seed, example index).
SynthDataset synth_generate(const SynthConfig& config);

// Long examples built by concatenating source utterances sampled without
// replacement within each example. Deterministic per seed.
std::vector<Utterance> concat_longform(const std::vector<Utterance>& source,
                                       int num_examples,
                                       int utterances_per_example,
                                       std::uint64_t seed);

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int total() const { return substitutions + insertions + deletions; }
};

struct WerResult {
  double rate = 0.0;
  EditCounts counts;
};

// Levenshtein alignment with unit costs. Ties between edit scripts are broken
// substitution, then deletion, then insertion; the rate is unaffected.
WerResult wer(const std::vector<int>& reference,
              const std::vector<int>& hypothesis);

// JSON-lines {id, labels, frames}; floats round-trip exactly.
void write_jsonl(const std::vector<Utterance>& utterances,
                 const std::filesystem::path& path);
std::vector<Utterance> read_jsonl(const std::filesystem::path& path);

}  // namespace esrm

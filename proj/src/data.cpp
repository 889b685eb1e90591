#include "esrm/data.hpp"

#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

namespace esrm {

namespace {

constexpr std::uint64_t kStreamEmbeddings = 0xE4B1ULL;
constexpr std::uint64_t kStreamExample = 0xD0000000ULL;
constexpr std::uint64_t kStreamLongform = 0x1F0000000ULL;

void validate(const SynthConfig& cfg) {
  if (cfg.vocab_size < 2) throw ConfigError("synth: vocab_size must be >= 2");
  if (cfg.feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (cfg.frames_per_token < 1)
    throw ConfigError("synth: frames_per_token must be >= 1");
  if (cfg.min_label_len < 1 || cfg.min_label_len > cfg.max_label_len)
    throw ConfigError("synth: need 1 <= min_label_len <= max_label_len");
  if (cfg.num_examples < 0)
    throw ConfigError("synth: num_examples must be >= 0");
  if (cfg.noise_sigma < 0.0)
    throw ConfigError("synth: noise_sigma must be >= 0");
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  SynthDataset ds;
  ds.config = cfg;

  Prng base(cfg.seed);
  ds.embeddings = Matrix::Zero(cfg.vocab_size + 1, cfg.feature_dim);
  {
    Prng emb = base.split(kStreamEmbeddings);
    for (int v = 1; v <= cfg.vocab_size; ++v)
      for (int c = 0; c < cfg.feature_dim; ++c)
        ds.embeddings(v, c) = emb.uniform(-1.0, 1.0);
  }

  ds.utterances.reserve(static_cast<std::size_t>(cfg.num_examples));
  for (int i = 0; i < cfg.num_examples; ++i) {
    Prng ex = base.split(kStreamExample + static_cast<std::uint64_t>(i));
    const int len =
        cfg.min_label_len +
        static_cast<int>(ex.next_below(static_cast<std::uint64_t>(
            cfg.max_label_len - cfg.min_label_len + 1)));
    Utterance utt;
    utt.labels.resize(static_cast<std::size_t>(len));
    for (int& tok : utt.labels)
      tok = 1 + static_cast<int>(
                    ex.next_below(static_cast<std::uint64_t>(cfg.vocab_size)));
    utt.frames = Matrix(len * cfg.frames_per_token, cfg.feature_dim);
    for (int j = 0; j < len; ++j) {
      for (int r = 0; r < cfg.frames_per_token; ++r) {
        const int row = j * cfg.frames_per_token + r;
        for (int c = 0; c < cfg.feature_dim; ++c) {
          double v = ds.embeddings(utt.labels[static_cast<std::size_t>(j)], c);
          if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * ex.gaussian();
          utt.frames(row, c) = v;
        }
      }
    }
    utt.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
    ds.utterances.push_back(std::move(utt));
  }
  return ds;
}

std::vector<Utterance> concat_longform(const std::vector<Utterance>& source,
                                       int num_examples,
                                       int utterances_per_example,
                                       std::uint64_t seed) {
  if (source.empty()) throw EmptyInputError("concat_longform: empty source");
  if (num_examples < 0)
    throw ConfigError("concat_longform: num_examples must be >= 0");
  if (utterances_per_example < 1 ||
      utterances_per_example > static_cast<int>(source.size()))
    throw ConfigError(
        "concat_longform: utterances_per_example must lie in [1, source size]");

  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(num_examples));
  for (int e = 0; e < num_examples; ++e) {
    Prng ex(derive_seed(seed, kStreamLongform + static_cast<std::uint64_t>(e)));
    const auto picks = sample_without_replacement(
        static_cast<std::int64_t>(source.size()), utterances_per_example, ex);
    Eigen::Index rows = 0;
    std::size_t tokens = 0;
    for (const auto p : picks) {
      rows += source[static_cast<std::size_t>(p)].frames.rows();
      tokens += source[static_cast<std::size_t>(p)].labels.size();
    }
    Utterance utt;
    utt.frames = Matrix(rows, source.front().frames.cols());
    utt.labels.reserve(tokens);
    Eigen::Index at = 0;
    for (const auto p : picks) {
      const Utterance& src = source[static_cast<std::size_t>(p)];
      utt.frames.middleRows(at, src.frames.rows()) = src.frames;
      at += src.frames.rows();
      utt.labels.insert(utt.labels.end(), src.labels.begin(), src.labels.end());
    }
    utt.id = "lf-" + std::to_string(seed) + "-" + std::to_string(e);
    out.push_back(std::move(utt));
  }
  return out;
}

WerResult wer(const std::vector<int>& reference,
              const std::vector<int>& hypothesis) {
  if (reference.empty())
    throw EmptyInputError("wer: reference must be nonempty");

  const std::size_t R = reference.size();
  const std::size_t H = hypothesis.size();
  std::vector<std::vector<int>> d(R + 1, std::vector<int>(H + 1, 0));
  for (std::size_t i = 0; i <= R; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= H; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const int diag = d[i - 1][j - 1] + (reference[i - 1] != hypothesis[j - 1]);
      const int del = d[i - 1][j] + 1;
      const int ins = d[i][j - 1] + 1;
      d[i][j] = std::min(diag, std::min(del, ins));
    }
  }

  // Traceback; preference order fixes the reported split among tied scripts.
  EditCounts counts;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (reference[i - 1] != hypothesis[j - 1])) {
      if (reference[i - 1] != hypothesis[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  WerResult result;
  result.counts = counts;
  result.rate = static_cast<double>(counts.total()) / static_cast<double>(R);
  return result;
}

void write_jsonl(const std::vector<Utterance>& utterances,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_jsonl: cannot open " + path.string());
  for (const Utterance& utt : utterances) {
    nlohmann::json j;
    j["id"] = utt.id;
    j["labels"] = utt.labels;
    auto frames = nlohmann::json::array();
    for (Eigen::Index r = 0; r < utt.frames.rows(); ++r) {
      auto row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < utt.frames.cols(); ++c)
        row.push_back(utt.frames(r, c));
      frames.push_back(std::move(row));
    }
    j["frames"] = std::move(frames);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write_jsonl: write failed for " + path.string());
}

std::vector<Utterance> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_jsonl: cannot open " + path.string());
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("read_jsonl: " + path.string() + ":" +
                    std::to_string(lineno) + ": " + e.what());
    }
    Utterance utt;
    utt.id = j.at("id").get<std::string>();
    utt.labels = j.at("labels").get<std::vector<int>>();
    const auto& frames = j.at("frames");
    const Eigen::Index rows = static_cast<Eigen::Index>(frames.size());
    const Eigen::Index cols =
        rows > 0 ? static_cast<Eigen::Index>(frames.at(0).size()) : 0;
    utt.frames = Matrix(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = frames.at(static_cast<std::size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != cols)
        throw IoError("read_jsonl: ragged frame rows in " + path.string());
      for (Eigen::Index c = 0; c < cols; ++c)
        utt.frames(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    out.push_back(std::move(utt));
  }
  return out;
}

}  // namespace esrm

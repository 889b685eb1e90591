#include "esrm/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace esrm {

namespace {

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void put_u8(std::uint8_t v) { bytes.push_back(v); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
};

struct ByteReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t at = 0;

  void need(std::size_t n) const {
    if (at + n > size) throw CorruptionError("model file truncated");
  }
  std::uint8_t get_u8() {
    need(1);
    return data[at++];
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[at++]) << (8 * i);
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[at++]) << (8 * i);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
};

// Dense trainable tensors in the fixed structural order used by the file.
// Reservoir rho/gamma live in the per-layer blocks instead.
std::vector<Tensor*> dense_tensors(TransducerModel& m) {
  std::vector<Tensor*> out;
  out.push_back(&m.embedding);
  auto add_stack = [&out](std::vector<StackLayer>& stack) {
    for (auto& layer : stack) {
      if (auto* cell = std::get_if<LstmCell>(&layer)) {
        out.push_back(&cell->w_x);
        out.push_back(&cell->w_h);
        out.push_back(&cell->b);
      }
    }
  };
  add_stack(m.encoder);
  add_stack(m.decoder);
  out.push_back(&m.w_enc);
  out.push_back(&m.w_dec);
  out.push_back(&m.joint_bias);
  out.push_back(&m.w_out);
  return out;
}

std::vector<ReservoirLayer*> esn_layers(TransducerModel& m) {
  std::vector<ReservoirLayer*> out;
  for (auto* stack : {&m.encoder, &m.decoder})
    for (auto& layer : *stack)
      if (auto* esn = std::get_if<ReservoirLayer>(&layer)) out.push_back(esn);
  return out;
}

void write_config(ByteWriter& w, const ModelConfig& cfg) {
  w.put_u32(static_cast<std::uint32_t>(cfg.feature_dim));
  w.put_u32(static_cast<std::uint32_t>(cfg.subsample_factor));
  w.put_u32(static_cast<std::uint32_t>(cfg.vocab_size));
  w.put_u32(static_cast<std::uint32_t>(cfg.joint_dim));
  w.put_u64(cfg.master_seed);
  w.put_f64(cfg.esn_sparsity);
  for (const auto* layers : {&cfg.encoder_layers, &cfg.decoder_layers}) {
    w.put_u32(static_cast<std::uint32_t>(layers->size()));
    for (const LayerSpec& spec : *layers) {
      w.put_u8(spec.kind == LayerKind::kEsn ? 1 : 0);
      w.put_u32(static_cast<std::uint32_t>(spec.dim));
    }
  }
}

ModelConfig read_config(ByteReader& r) {
  ModelConfig cfg;
  cfg.feature_dim = static_cast<int>(r.get_u32());
  cfg.subsample_factor = static_cast<int>(r.get_u32());
  cfg.vocab_size = static_cast<int>(r.get_u32());
  cfg.joint_dim = static_cast<int>(r.get_u32());
  cfg.master_seed = r.get_u64();
  cfg.esn_sparsity = r.get_f64();
  for (auto* layers : {&cfg.encoder_layers, &cfg.decoder_layers}) {
    const std::uint32_t n = r.get_u32();
    if (n > 1024) throw CorruptionError("model file: implausible layer count");
    layers->resize(n);
    for (LayerSpec& spec : *layers) {
      spec.kind = r.get_u8() == 1 ? LayerKind::kEsn : LayerKind::kTrainableLstm;
      spec.dim = static_cast<int>(r.get_u32());
    }
  }
  return cfg;
}

constexpr std::size_t kEsnBlockBytes = 8 + 4 + 4 + 8 + 8 + 8 + 1 + 8 + 8;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

ModelFileLayout model_file_layout(const TransducerModel& model) {
  ModelFileLayout layout;
  const ModelConfig& cfg = model.config;
  layout.header = 4 + 4 + (4 * 4 + 8 + 8) +
                  (4 + 5 * cfg.encoder_layers.size()) +
                  (4 + 5 * cfg.decoder_layers.size());
  std::size_t n_esn = 0;
  for (const auto* layers : {&cfg.encoder_layers, &cfg.decoder_layers})
    for (const LayerSpec& spec : *layers)
      if (spec.kind == LayerKind::kEsn) ++n_esn;
  layout.esn_blocks = 4 + n_esn * kEsnBlockBytes;
  layout.tensor_bytes = 4;
  auto& mut = const_cast<TransducerModel&>(model);
  for (const Tensor* t : dense_tensors(mut))
    layout.tensor_bytes += 8 + 4 * static_cast<std::uint64_t>(t->size());
  layout.crc = 4;
  layout.total =
      layout.header + layout.esn_blocks + layout.tensor_bytes + layout.crc;
  return layout;
}

std::uint64_t save_model(TransducerModel& model,
                         const std::filesystem::path& path) {
  // Normalize trainable values to what the file stores, so the in-memory
  // model matches any reader bit for bit.
  for (Tensor* t : dense_tensors(model))
    t->value = t->value.unaryExpr([](double v) { return round_f32(v); });

  ByteWriter w;
  w.bytes.reserve(model_file_layout(model).total);
  for (const char c : kModelMagic) w.put_u8(static_cast<std::uint8_t>(c));
  w.put_u32(kModelFormatVersion);
  write_config(w, model.config);

  const auto esn = esn_layers(model);
  w.put_u32(static_cast<std::uint32_t>(esn.size()));
  for (const ReservoirLayer* layer : esn) {
    const ReservoirConfig& rc = layer->config;
    w.put_u64(rc.seed);
    w.put_u32(static_cast<std::uint32_t>(rc.state_dim));
    w.put_u32(static_cast<std::uint32_t>(rc.input_dim));
    w.put_f64(rc.sparsity);
    w.put_f64(rc.init_lo);
    w.put_f64(rc.init_hi);
    w.put_u8(rc.normalize_radius ? 1 : 0);
    w.put_f64(layer->rho_value());
    w.put_f64(layer->gamma_value());
  }

  const auto tensors = dense_tensors(model);
  w.put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor* t : tensors) {
    w.put_u32(static_cast<std::uint32_t>(t->value.rows()));
    w.put_u32(static_cast<std::uint32_t>(t->value.cols()));
    for (Eigen::Index r = 0; r < t->value.rows(); ++r)
      for (Eigen::Index c = 0; c < t->value.cols(); ++c)
        w.put_f32(static_cast<float>(t->value(r, c)));
  }

  w.put_u32(crc32(w.bytes.data(), w.bytes.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_model: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw IoError("save_model: write failed for " + path.string());
  return w.bytes.size();
}

TransducerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw CorruptionError("load_model: file too small");

  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw CorruptionError("load_model: bad magic");
  {
    const std::uint32_t stored = crc32(bytes.data(), bytes.size() - 4);
    ByteReader tail{bytes.data(), bytes.size(), bytes.size() - 4};
    if (tail.get_u32() != stored)
      throw CorruptionError("load_model: CRC mismatch");
  }

  ByteReader r{bytes.data(), bytes.size() - 4, 4};
  const std::uint32_t version = r.get_u32();
  if (version != kModelFormatVersion)
    throw UnsupportedVersionError("load_model: unsupported format version " +
                                  std::to_string(version));

  const ModelConfig cfg = read_config(r);
  TransducerModel model;
  try {
    model = build_model(cfg);
  } catch (const Error& e) {
    throw CorruptionError(std::string("load_model: stored config rejected: ") +
                          e.what());
  }

  const auto esn = esn_layers(model);
  const std::uint32_t n_esn = r.get_u32();
  if (n_esn != esn.size())
    throw CorruptionError("load_model: reservoir block count mismatch");
  for (ReservoirLayer* layer : esn) {
    ReservoirConfig rc;
    rc.seed = r.get_u64();
    rc.state_dim = static_cast<int>(r.get_u32());
    rc.input_dim = static_cast<int>(r.get_u32());
    rc.sparsity = r.get_f64();
    rc.init_lo = r.get_f64();
    rc.init_hi = r.get_f64();
    rc.normalize_radius = r.get_u8() == 1;
    if (!(rc == layer->config))
      throw CorruptionError(
          "load_model: reservoir block inconsistent with model config");
    layer->rho.value(0, 0) = r.get_f64();
    layer->gamma.value(0, 0) = r.get_f64();
  }

  const auto tensors = dense_tensors(model);
  const std::uint32_t n_tensors = r.get_u32();
  if (n_tensors != tensors.size())
    throw CorruptionError("load_model: tensor count mismatch");
  for (Tensor* t : tensors) {
    const auto rows = static_cast<Eigen::Index>(r.get_u32());
    const auto cols = static_cast<Eigen::Index>(r.get_u32());
    if (rows != t->value.rows() || cols != t->value.cols())
      throw CorruptionError("load_model: tensor '" + t->name +
                            "' shape inconsistent with config");
    for (Eigen::Index rr = 0; rr < rows; ++rr)
      for (Eigen::Index cc = 0; cc < cols; ++cc)
        t->value(rr, cc) = static_cast<double>(r.get_f32());
  }
  if (r.at != r.size)
    throw CorruptionError("load_model: trailing bytes after payload");
  return model;
}

}  // namespace esrm

// Binary model files. Frozen reservoirs are stored as config + seed only and
// regenerated on load; trainable tensors are stored as 32-bit floats. A CRC32
// trailer validates the whole file.
#pragma once

#include <cstdint>
#include <filesystem>

#include "esrm/transducer.hpp"

namespace esrm {

inline constexpr char kModelMagic[4] = {'E', 'S', 'R', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Byte layout of a serialized model, for size accounting.
struct ModelFileLayout {
  std::uint64_t total = 0;
  std::uint64_t header = 0;        // magic, version, model config
  std::uint64_t esn_blocks = 0;    // seed + reservoir config + rho/gamma each
  std::uint64_t tensor_bytes = 0;  // shapes + f32 payloads
  std::uint64_t crc = 4;
};
ModelFileLayout model_file_layout(const TransducerModel& model);

// Writes the model and returns the byte count. Trainable dense tensors are
// rounded to their stored f32 values in place first, so the in-memory model
// and any later load produce bit-identical forward outputs.
std::uint64_t save_model(TransducerModel& model,
                         const std::filesystem::path& path);

TransducerModel load_model(const std::filesystem::path& path);

// CRC-32 (polynomial 0xEDB88320), as used by the model file trailer.
std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace esrm

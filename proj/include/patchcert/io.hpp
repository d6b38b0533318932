#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchcert/ablation.hpp"
#include "patchcert/dataset.hpp"
#include "patchcert/tensor.hpp"
#include "patchcert/vit.hpp"

namespace patchcert {

/// Malformed file contents. `offset` is the byte position of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t at)
      : std::runtime_error(what + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
  std::uint64_t offset;
};

/// Input file does not exist or cannot be opened.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// CIFAR-10 binary batch: per record one label byte (0–9), then 1024 red,
/// 1024 green, 1024 blue bytes in row-major order. Pixels scaled by 1/255.
/// All examples are tagged Split::test.
LabeledDataset load_cifar10_binary(const std::filesystem::path& path);
LabeledDataset parse_cifar10_binary(const std::vector<std::uint8_t>& bytes);

enum class IdxType : std::uint8_t { u8 = 0x08, f32 = 0x0D };

/// IDX tensor with values as stored (bytes are 0..255, not rescaled).
struct IdxTensor {
  IdxType type = IdxType::u8;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  Tensor to_tensor(bool scale_bytes = false) const;
  friend bool operator==(const IdxTensor&, const IdxTensor&) = default;
};

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& t);
IdxTensor load_idx_tensor(const std::filesystem::path& path);
void save_idx_tensor(const std::filesystem::path& path, const IdxTensor& t);

/// Images from an N×H×W (grayscale) or N×H×W×C u8 IDX file plus an N-entry
/// label file. Pixels scaled to [0,1]. All examples tagged Split::test.
LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                int num_classes);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ViTConfig config;
  ModelParams params;
};

/// "SVIT", u32 LE version, u32 LE header length, JSON header (config and
/// parameter manifest), then little-endian float32 data in manifest order.
std::vector<std::uint8_t> serialize_checkpoint(const ViTConfig& cfg, const ModelParams& params);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const ViTConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Binary P6 (channels replicated for grayscale) with 8-bit samples.
std::vector<std::uint8_t> encode_ppm(const Image& img);
/// Binary P5 with 0/255 samples.
std::vector<std::uint8_t> encode_pgm(const Mask& mask);
/// Reads a P6 file back as a 3-channel image.
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
/// Reads a P5 file back as a mask (nonzero = retained).
Mask decode_pgm(const std::vector<std::uint8_t>& bytes);

}  // namespace patchcert

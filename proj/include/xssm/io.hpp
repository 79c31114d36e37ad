#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "xssm/net.hpp"
#include "xssm/tensor.hpp"

namespace xssm::io {

// Malformed, truncated or inconsistent files and datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grayscale PFM ("Pf"). Writes little-endian (negative scale), rows bottom-up.
Tensor<float> read_pfm(const std::filesystem::path& path);  // [1, H, W]
void write_pfm(const std::filesystem::path& path, const Tensor<float>& map);

// Binary PPM (P6, maxval 255), values scaled to [0, 1].
Tensor<float> read_ppm(const std::filesystem::path& path);  // [3, H, W]
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

// Writes through a sibling temp file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "XSSM" | u32 version | u32 count | per tensor: u32 name length, name,
// u32 rank, u64 dims..., f32 data | u32 CRC32 of everything before it.
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Model checkpoint: config fields as scalar tensors named "config.<key>",
// followed by the parameters in registration order.
void save_model(const std::filesystem::path& path, const net::GdsrNet<float>& model);
net::GdsrNet<float> load_model(const std::filesystem::path& path);

}  // namespace xssm::io

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace priorforge::io {

/// Float32 tensor as stored in .prft files.
///
/// Layout (little-endian):
///   0  magic "PRFT"
///   4  u16 format version (1)
///   6  u16 dtype code (0 = float32)
///   8  u32 rank
///  12  u32 reserved (0)
///  16  u64 reserved (0)
///  24  rank x u64 dims
///      row-major float32 payload
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint16_t kDtypeFloat32 = 0;
inline constexpr std::size_t kTensorHeaderBytes = 24;

std::vector<unsigned char> encode_tensor(const Tensor& t);
/// Decodes one tensor starting at `offset`; advances offset past it.
Tensor decode_tensor(const std::vector<unsigned char>& bytes,
                     std::size_t& offset);

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

std::vector<unsigned char> read_file(const std::string& path);
/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace priorforge::io

#include "priorforge/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "priorforge/common.hpp"

namespace priorforge::io {

static_assert(std::endian::native == std::endian::little,
              "tensor I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw InputError("truncated tensor data");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.element_count() != t.data.size())
    throw InputError("tensor payload does not match its dims");
  std::vector<unsigned char> out;
  out.reserve(kTensorHeaderBytes + 8 * t.dims.size() + 4 * t.data.size());
  out.insert(out.end(), {'P', 'R', 'F', 'T'});
  put<std::uint16_t>(out, kTensorVersion);
  put<std::uint16_t>(out, kDtypeFloat32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, 0);
  for (auto d : t.dims) put<std::uint64_t>(out, d);
  const auto* p = reinterpret_cast<const unsigned char*>(t.data.data());
  out.insert(out.end(), p, p + 4 * t.data.size());
  return out;
}

Tensor decode_tensor(const std::vector<unsigned char>& bytes,
                     std::size_t& offset) {
  if (offset + kTensorHeaderBytes > bytes.size() ||
      std::memcmp(bytes.data() + offset, "PRFT", 4) != 0)
    throw InputError("bad tensor magic");
  std::size_t off = offset + 4;
  const auto version = get<std::uint16_t>(bytes, off);
  const auto dtype = get<std::uint16_t>(bytes, off);
  const auto rank = get<std::uint32_t>(bytes, off);
  get<std::uint32_t>(bytes, off);
  get<std::uint64_t>(bytes, off);
  if (version != kTensorVersion) throw InputError("unsupported tensor version");
  if (dtype != kDtypeFloat32) throw InputError("unsupported tensor dtype");
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get<std::uint64_t>(bytes, off);
  const std::uint64_t n = t.element_count();
  if (off + 4 * n > bytes.size()) throw InputError("truncated tensor payload");
  t.data.resize(n);
  std::memcpy(t.data.data(), bytes.data() + off, 4 * n);
  offset = off + 4 * n;
  return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor read_tensor(const std::string& path) {
  const auto bytes = read_file(path);
  std::size_t off = 0;
  Tensor t = decode_tensor(bytes, off);
  if (off != bytes.size()) throw InputError("trailing bytes after tensor");
  return t;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename into " + path + ": " + ec.message());
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace priorforge::io

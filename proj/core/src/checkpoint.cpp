#include <bit>
#include <cstring>
#include <fstream>

#include "jrffp/nn_core.hpp"

namespace jrffp {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

void put(std::vector<std::uint8_t>& b, std::uint64_t v, int bytes) {
  for (int k = 0; k < bytes; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

struct Cursor {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  std::uint64_t get(int bytes, const char* what) {
    if (b.size() - pos < static_cast<std::size_t>(bytes))
      throw FormatError(std::string("truncated checkpoint while reading ") + what, pos);
    std::uint64_t v = 0;
    for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(b[pos + k]) << (8 * k);
    pos += static_cast<std::size_t>(bytes);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& tensors) {
  std::vector<std::uint8_t> b = {'J', 'R', 'F', 'P'};
  put(b, kCheckpointVersion, 2);
  put(b, tensors.size(), 4);
  for (const auto& e : tensors) {
    if (e.name.size() > 0xffff) throw UsageError("tensor name too long for checkpoint: " + e.name);
    if (e.tensor.shape.size() > 0xff) throw UsageError("tensor rank too large for checkpoint: " + e.name);
    put(b, e.name.size(), 2);
    b.insert(b.end(), e.name.begin(), e.name.end());
    put(b, e.tensor.shape.size(), 1);
    for (auto d : e.tensor.shape) put(b, d, 4);
    for (double v : e.tensor.values) put(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  }
  return b;
}

ParamSet decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "JRFP", 4) != 0)
    throw FormatError("bad magic, expected \"JRFP\"", 0);
  Cursor c{bytes, 4};
  const std::size_t version_at = c.pos;
  const auto version = c.get(2, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  const auto count = c.get(4, "tensor_count");

  ParamSet out;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::size_t name_len = c.get(2, "name_len");
    if (bytes.size() - c.pos < name_len) throw FormatError("truncated checkpoint while reading name", c.pos);
    std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(c.pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(c.pos + name_len));
    const std::size_t name_at = c.pos;
    c.pos += name_len;
    const std::size_t rank = c.get(1, "rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = c.get(4, "dims");
    const std::size_t n = Tensor::element_count(dims);
    if ((bytes.size() - c.pos) / 4 < n) throw FormatError("truncated checkpoint values for '" + name + "'", c.pos);
    Tensor tensor(dims);
    for (auto& v : tensor.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(c.get(4, "value")));
    if (out.contains(name)) throw FormatError("duplicate tensor name '" + name + "'", name_at);
    out.add(std::move(name), std::move(tensor));
  }
  if (c.pos != bytes.size()) throw FormatError("trailing bytes after last tensor", c.pos);
  return out;
}

void save_checkpoint(const ParamSet& tensors, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace jrffp

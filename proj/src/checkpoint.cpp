#include "scanconv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "scanconv/errors.hpp"

namespace scanconv {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'N', 'V', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("truncated checkpoint");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& records,
                                            std::uint32_t value_bytes) {
  if (value_bytes != 4 && value_bytes != 8)
    throw CheckpointError("unsupported value width " + std::to_string(value_bytes));
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, value_bytes);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    std::uint64_t count = 1;
    for (const auto e : r.shape) {
      put_le<std::uint64_t>(out, e);
      count *= e;
    }
    if (count != r.values.size()) throw CheckpointError("value count mismatch for '" + r.name + "'");
    for (const double v : r.values) {
      if (value_bytes == 4)
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

CheckpointContents decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("bad magic");
  std::vector<std::uint8_t> body(bytes.begin() + sizeof(kMagic), bytes.end());
  Reader in(body);
  CheckpointContents c;
  c.version = in.get<std::uint32_t>();
  if (c.version != kCheckpointVersion)
    throw CheckpointError("unsupported version " + std::to_string(c.version));
  c.value_bytes = in.get<std::uint32_t>();
  if (c.value_bytes != 4 && c.value_bytes != 8)
    throw CheckpointError("unsupported value width " + std::to_string(c.value_bytes));
  const auto n = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray r;
    r.name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(in.get<std::uint64_t>());
      count *= r.shape.back();
    }
    r.values.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      if (c.value_bytes == 4)
        r.values.push_back(std::bit_cast<float>(in.get<std::uint32_t>()));
      else
        r.values.push_back(std::bit_cast<double>(in.get<std::uint64_t>()));
    }
    c.records.push_back(std::move(r));
  }
  if (!in.at_end()) throw CheckpointError("trailing bytes after last record");
  return c;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace scanconv

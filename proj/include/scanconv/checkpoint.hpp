#pragma once

// Parameter checkpoint file layout (all integers little-endian):
//
//   bytes 0..7   magic "SCNVCKPT"
//   u32          format version (currently 1)
//   u32          bytes per value (4 = float32, 8 = float64)
//   u32          record count
//   per record:
//     u32        name length, then that many UTF-8 bytes
//     u32        rank, then rank x u64 extents
//     values     product(extents) IEEE-754 values, row-major, little-endian

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scanconv/tensor.hpp"

namespace scanconv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;  // widened on load
};

struct CheckpointContents {
  std::uint32_t version = 0;
  std::uint32_t value_bytes = 0;
  std::vector<NamedArray> records;
};

template <typename Scalar>
struct NamedParameter {
  std::string name;
  ag::Tensor<Scalar> tensor;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& records,
                                            std::uint32_t value_bytes);
CheckpointContents decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

template <typename Scalar>
std::vector<NamedArray> to_named_arrays(const std::vector<NamedParameter<Scalar>>& params) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    NamedArray a;
    a.name = p.name;
    a.shape = {static_cast<std::uint64_t>(p.tensor.rows()),
               static_cast<std::uint64_t>(p.tensor.cols())};
    a.values.assign(p.tensor.value().data(), p.tensor.value().data() + p.tensor.size());
    out.push_back(std::move(a));
  }
  return out;
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedParameter<Scalar>>& params) {
  write_bytes(path, encode_checkpoint(to_named_arrays(params), sizeof(Scalar)));
}

/// Copies stored values into `params`, matching by name and shape.
/// Throws CheckpointError on any missing, extra or mis-shaped record.
template <typename Scalar>
void load_checkpoint(const std::filesystem::path& path,
                     std::vector<NamedParameter<Scalar>>& params) {
  const CheckpointContents contents = decode_checkpoint(read_bytes(path));
  if (contents.records.size() != params.size())
    throw CheckpointError("record count " + std::to_string(contents.records.size()) +
                          " != model parameter count " + std::to_string(params.size()));
  for (auto& p : params) {
    const NamedArray* found = nullptr;
    for (const auto& r : contents.records)
      if (r.name == p.name) found = &r;
    if (!found) throw CheckpointError("missing parameter '" + p.name + "'");
    if (found->shape.size() != 2 || found->shape[0] != static_cast<std::uint64_t>(p.tensor.rows()) ||
        found->shape[1] != static_cast<std::uint64_t>(p.tensor.cols()))
      throw CheckpointError("shape mismatch for '" + p.name + "'");
    auto& v = p.tensor.mutable_value();
    for (ag::Index i = 0; i < v.size(); ++i)
      v.data()[i] = static_cast<Scalar>(found->values[static_cast<std::size_t>(i)]);
  }
}

}  // namespace scanconv

#pragma once

// Tensor archive used for checkpoints.
//
// Layout (little-endian): "MGNNCKPT", u32 version, u32 entry count, then per
// entry: u16 name length, name, u8 dtype (0 f32, 1 i64, 2 utf8, 3 f64), u8 rank,
// rank x u64 dims, payload. utf8 entries have rank 1 and dims[0] = byte count.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgnn/core.hpp"

namespace mgnn::io {

MGNN_DEFINE_ERROR(CorruptArchive);

struct Tensor {
  enum class DType : std::uint8_t { F32 = 0, I64 = 1, Utf8 = 2, F64 = 3 };
  DType dtype = DType::F32;
  std::vector<std::uint64_t> dims;
  std::vector<float> f32;
  std::vector<std::int64_t> i64;
  std::vector<double> f64;
  std::string text;

  friend bool operator==(const Tensor&, const Tensor&) = default;

  /// Column vectors are stored as rank 1, matrices as rank 2 (row-major payload).
  template <typename Derived>
  static Tensor from(const Eigen::MatrixBase<Derived>& m) {
    Tensor t;
    if (Derived::ColsAtCompileTime == 1)
      t.dims = {static_cast<std::uint64_t>(m.rows())};
    else
      t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.f32.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) t.f32.push_back(static_cast<float>(m(i, j)));
    return t;
  }
  static Tensor integers(std::vector<std::int64_t> values) {
    Tensor t;
    t.dtype = DType::I64;
    t.dims = {values.size()};
    t.i64 = std::move(values);
    return t;
  }
  static Tensor reals(std::vector<double> values) {
    Tensor t;
    t.dtype = DType::F64;
    t.dims = {values.size()};
    t.f64 = std::move(values);
    return t;
  }
  static Tensor utf8(std::string s) {
    Tensor t;
    t.dtype = DType::Utf8;
    t.dims = {s.size()};
    t.text = std::move(s);
    return t;
  }

  /// Copies into an Eigen matrix or vector of the same shape.
  template <typename Derived>
  void to(Eigen::MatrixBase<Derived>& m, const std::string& name) const {
    if (dtype != DType::F32) throw DimensionMismatch(name + ": not a float tensor");
    const bool vec = Derived::ColsAtCompileTime == 1;
    const bool ok = vec ? dims.size() == 1 && dims[0] == static_cast<std::uint64_t>(m.rows())
                        : dims.size() == 2 && dims[0] == static_cast<std::uint64_t>(m.rows()) &&
                              dims[1] == static_cast<std::uint64_t>(m.cols());
    if (!ok) throw DimensionMismatch(name + ": stored shape does not match the model");
    std::size_t k = 0;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m.derived()(i, j) = static_cast<typename Derived::Scalar>(f32[k++]);
  }
};

using Archive = std::map<std::string, Tensor>;

std::string archive_encode(const Archive& a);
Archive archive_decode(std::string_view bytes);
void archive_write(const std::filesystem::path& path, const Archive& a);
Archive archive_read(const std::filesystem::path& path);

/// Lookup that throws CorruptArchive naming the missing key.
const Tensor& archive_get(const Archive& a, const std::string& key);

}  // namespace mgnn::io

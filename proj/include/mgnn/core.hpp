#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mgnn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

enum class Mode { Train, Eval };

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define MGNN_DEFINE_ERROR(Name)                                                \
  class Name : public Error {                                                  \
  public:                                                                      \
    using Error::Error;                                                        \
  }

MGNN_DEFINE_ERROR(ShapeMismatch);
MGNN_DEFINE_ERROR(EmptyFanIn);
MGNN_DEFINE_ERROR(ConfigError);
MGNN_DEFINE_ERROR(NonFiniteLoss);
MGNN_DEFINE_ERROR(DimensionMismatch);

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace mgnn

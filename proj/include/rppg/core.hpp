#pragma once

// Shared aliases and the error taxonomy used across the library.

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "binary container format assumes a little-endian host");

namespace rppg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <class S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Row-major map types; tensors store row-major contiguous data.
template <class S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowMatrixMap = Eigen::Map<RowMatrix<S>>;
template <class S>
using ConstRowMatrixMap = Eigen::Map<const RowMatrix<S>>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension / shape mismatches between operands.
struct ShapeError : Error {
  using Error::Error;
};

// API contract violations (non-scalar loss, missing gradient buffer, ...).
struct ContractError : Error {
  using Error::Error;
};

// Argument outside its documented range (e.g. shift beyond +-floor(fs/2)).
struct RangeError : Error {
  using Error::Error;
};

// Signal with no usable variance where variance is required.
struct DegenerateSignalError : Error {
  using Error::Error;
};

struct MissingSubjectError : Error {
  using Error::Error;
};

struct NyquistError : Error {
  using Error::Error;
};

struct TooShortError : Error {
  using Error::Error;
};

// Missing frame in an on-disk record; carries the offending index.
struct GapError : Error {
  GapError(const std::string& msg, long long index) : Error(msg), frame_index(index) {}
  long long frame_index;
};

struct ValidationError : Error {
  using Error::Error;
};

struct TapeError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace rppg

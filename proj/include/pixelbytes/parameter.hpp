#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pixelbytes {

using Rng = std::mt19937_64;

// Row-major so that time-step row blocks are contiguous.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A learnable array. `value` holds the data as a rows x cols matrix whose
// row-major flattening is the row-major flattening of `shape`.
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<std::size_t> shape, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name)), shape(std::move(shape)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParameterList = std::vector<Parameter*>;

inline void fill_uniform(Mat& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace pixelbytes

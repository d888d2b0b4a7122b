#pragma once

#include <Eigen/Dense>
#include <string>

namespace master::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
inline std::string shape_str(const Mat<S>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace master::nn

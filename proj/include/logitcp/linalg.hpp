#pragma once

#include <Eigen/SVD>

#include "logitcp/tensor.hpp"

namespace logitcp {

/// Moore-Penrose pseudo-inverse; singular values below
/// rel_cutoff * sigma_max are treated as zero.
inline Matrix pseudo_inverse(const Matrix& m, double rel_cutoff = 1e-10) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = rel_cutoff * (s.size() ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cutoff && s[i] > 0.0) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Leading `count` left singular vectors of m (fewer if m has smaller rank dimension).
inline Matrix leading_left_singular_vectors(const Matrix& m, Eigen::Index count) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto avail = std::min<Eigen::Index>(count, svd.matrixU().cols());
  return svd.matrixU().leftCols(avail);
}

}  // namespace logitcp

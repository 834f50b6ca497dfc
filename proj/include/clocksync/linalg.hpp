#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace clocksync {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using MatN2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline Mat2 symmetrize(const Mat2& m) { return 0.5 * (m + m.transpose()); }

// Eigenvalues of a symmetric 2x2, ascending.
inline Vec2 sym_eigenvalues(const Mat2& m) {
  const double a = m(0, 0);
  const double d = m(1, 1);
  const double b = 0.5 * (m(0, 1) + m(1, 0));
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  return {mean - rad, mean + rad};
}

// A - B is PSD up to `slack` times the larger spectral norm.
template <typename MatA, typename MatB>
bool loewner_geq(const MatA& a, const MatB& b, double slack = 1e-10) {
  const Eigen::MatrixXd diff = 0.5 * ((a - b) + (a - b).transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(diff, Eigen::EigenvaluesOnly);
  const double scale = std::max({Eigen::MatrixXd(a).norm(), Eigen::MatrixXd(b).norm(), 1e-300});
  return eig.eigenvalues().minCoeff() >= -slack * scale;
}

template <typename Mat>
bool is_psd(const Mat& m, double slack = 1e-10) {
  return loewner_geq(m, Mat::Zero(m.rows(), m.cols()), slack);
}

// Orthogonal projector onto the column space of a full-column-rank matrix.
inline Eigen::MatrixXd column_projector(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return q * q.transpose();
}

}  // namespace clocksync

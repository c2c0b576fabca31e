#include <cmath>

#include "resfit/errors.hpp"
#include "resfit/fit.hpp"

namespace resfit {

double rms_radial_residual(const Eigen::Ref<const Eigen::VectorXcd>& points, double xc,
                           double yc, double r) {
  if (points.size() == 0) return 0.0;
  const std::complex<double> c(xc, yc);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    const double d = std::abs(points[i] - c) - r;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(points.size()));
}

// Taubin fit in Chernov's formulation: the moment matrix of the centered and
// scaled data reduces the generalized eigenproblem to the smallest
// non-negative root of a cubic, found by Newton's method from zero.
CircleGeometry fit_circle_algebraic(const Eigen::Ref<const Eigen::VectorXcd>& points) {
  const Eigen::Index n = points.size();
  if (n < 3) throw DegenerateGeometry("circle fit needs at least 3 points");

  const std::complex<double> mean = points.mean();
  const Eigen::VectorXcd centered = points.array() - mean;
  const double scale = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw DegenerateGeometry("circle fit input has no spread");

  double mxx = 0, myy = 0, mxy = 0, mxz = 0, myz = 0, mzz = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = centered[i].real() / scale;
    const double y = centered[i].imag() / scale;
    const double z = x * x + y * y;
    mxx += x * x;
    myy += y * y;
    mxy += x * y;
    mxz += x * z;
    myz += y * z;
    mzz += z * z;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mxx *= inv_n;
  myy *= inv_n;
  mxy *= inv_n;
  mxz *= inv_n;
  myz *= inv_n;
  mzz *= inv_n;

  const double mz = mxx + myy;
  const double cov_xy = mxx * myy - mxy * mxy;
  const double var_z = mzz - mz * mz;
  const double a3 = 4.0 * mz;
  const double a2 = -3.0 * mz * mz - mzz;
  const double a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
  const double a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
  const double a22 = a2 + a2;
  const double a33 = 3.0 * a3;

  double x = 0.0;
  double y = 1e300;
  for (int iter = 0; iter < 99; ++iter) {
    const double y_old = y;
    y = a0 + x * (a1 + x * (a2 + x * a3));
    if (std::abs(y) > std::abs(y_old)) {
      x = 0.0;
      break;
    }
    const double dy = a1 + x * (a22 + x * a33);
    if (dy == 0.0) break;
    const double x_old = x;
    x = x_old - y / dy;
    if (x == x_old || std::abs((x - x_old) / x) < 1e-15) break;
  }
  if (!(x >= 0.0) || !std::isfinite(x)) x = 0.0;

  const double det = x * x - x * mz + cov_xy;
  const double cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
  const double cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
  const double r = std::sqrt(cx * cx + cy * cy + mz);
  // A circle a million times larger than the data cloud is a straight line
  // for every practical purpose.
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(r) || r > 1e6)
    throw DegenerateGeometry("points are collinear; no finite circle fits");

  CircleGeometry g;
  g.xc = cx * scale + mean.real();
  g.yc = cy * scale + mean.imag();
  g.r = r * scale;
  g.rms_radial_residual = rms_radial_residual(points, g.xc, g.yc, g.r);
  return g;
}

}  // namespace resfit

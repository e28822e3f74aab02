#include "dtnlqr/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtnlqr {

Mat build_R(const CostWeights& cw, const ModelSpec& m) {
  const Index K = m.classes();
  const Vec& ld = m.lambda_d;
  const Vec& lo = m.outflow();
  Mat R(K, K);
  for (Index i = 0; i < K; ++i) {
    for (Index j = 0; j < K; ++j) R(i, j) = -cw.c1 * (ld[i] * ld[j]);
    R(i, i) += cw.c3 + cw.c4 * lo[i] * lo[i];
  }
  return R;
}

Definiteness is_positive_definite(const Mat& R, double tol) {
  if (R.rows() != R.cols()) throw DimensionError("R must be square");
  const double scale = std::max(R.cwiseAbs().maxCoeff(), 1e-300);
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
    throw std::invalid_argument("R is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(R, Eigen::EigenvaluesOnly);
  Definiteness d;
  d.eigenvalues = es.eigenvalues();
  const double emax = d.eigenvalues.cwiseAbs().maxCoeff();
  const double lo = d.eigenvalues.minCoeff();
  d.is_pd = lo > tol * emax;
  d.is_psd = lo > -tol * emax;
  return d;
}

C4Bound sufficient_c4_bound(const CostWeights& cw, const ModelSpec& m) {
  const Vec& ld = m.lambda_d;
  const double n2 = ld.squaredNorm();
  const double out2 = m.outflow().cwiseProduct(ld).squaredNorm();  // |Lout Ld|^2
  if (!(out2 > 0.0)) throw std::invalid_argument("|Lout Ld| must be positive");
  C4Bound b;
  b.direction_bound = (cw.c1 * n2 - cw.c3) * n2 / out2;
  b.alpha = n2 / ld.array().pow(4).sum();
  b.alpha_bound = b.alpha * (cw.c1 - cw.c3);
  return b;
}

namespace {

double min_eig_scaled(double r, double s, const ModelSpec& m) {
  CostWeights cw;
  cw.c1 = r;
  cw.c3 = 1.0;
  cw.c4 = s;
  Eigen::SelfAdjointEigenSolver<Mat> es(build_R(cw, m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

}  // namespace

double min_c4_ratio(double c1_over_c3, const ModelSpec& m, double tol) {
  if (c1_over_c3 < 0.0) throw std::invalid_argument("c1/c3 must be >= 0");
  auto pd = [&](double s) { return min_eig_scaled(c1_over_c3, s, m) > 0.0; };
  if (pd(0.0)) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  int doublings = 0;
  while (!pd(hi)) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60) throw std::runtime_error("min_c4_ratio: no feasible bracket");
  }
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (pd(mid) ? hi : lo) = mid;
  }
  return hi;
}

FeasibilityReport analyze_feasibility(const CostWeights& cw, const ModelSpec& m, double tol) {
  FeasibilityReport rep;
  rep.R = build_R(cw, m);
  rep.definiteness = is_positive_definite(rep.R, tol);
  rep.bound = sufficient_c4_bound(cw, m);
  if (cw.c3 > 0.0) rep.min_c4_ratio = min_c4_ratio(cw.c1 / cw.c3, m);
  return rep;
}

}  // namespace dtnlqr

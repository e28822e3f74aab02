#pragma once

#include <optional>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

/// R = -c1 Ld Ld' + c3 I + c4 Lout^2. Exactly symmetric by construction.
Mat build_R(const CostWeights& cw, const ModelSpec& m);

struct Definiteness {
  Vec eigenvalues;  // ascending
  bool is_pd = false;
  bool is_psd = false;
};

/// Symmetric eigen-solve. `tol` is relative to the largest |eigenvalue|;
/// PD means min eigenvalue > tol * scale, PSD means > -tol * scale.
/// Throws std::invalid_argument if R is not symmetric within tol.
Definiteness is_positive_definite(const Mat& R, double tol = 1e-10);

/// Threshold on c4 from the quadratic form of R along the unit vector
/// Ld/|Ld|: R is positive there iff c4 > direction_bound. For |Ld| = 1 this
/// is (c1 - c3)|Ld|^2/|Lout Ld|^2 and, with Lout = diag(Ld), equal to
/// alpha (c1 - c3) with alpha = sum Ld^2 / sum Ld^4.
///
/// It is a lower bound on the true frontier and is only sufficient when Ld is
/// an eigenvector of Lout^2 (e.g. Lout proportional to I); see
/// min_c4_ratio for the exact frontier.
struct C4Bound {
  double direction_bound = 0.0;
  double alpha = 0.0;
  double alpha_bound = 0.0;  // alpha (c1 - c3)
};

C4Bound sufficient_c4_bound(const CostWeights& cw, const ModelSpec& m);

/// Smallest c4/c3 with R > 0 for the given c1/c3 (c3 > 0 scaled out).
/// Bisection on the min-eigenvalue predicate; bracket grows by doubling.
/// Throws std::runtime_error if no bracket is found after 60 doublings.
double min_c4_ratio(double c1_over_c3, const ModelSpec& m, double tol = 1e-10);

struct FeasibilityReport {
  Mat R;
  Definiteness definiteness;
  C4Bound bound;
  std::optional<double> min_c4_ratio;  // absent when c3 == 0
};

FeasibilityReport analyze_feasibility(const CostWeights& cw, const ModelSpec& m,
                                      double tol = 1e-10);

}  // namespace dtnlqr

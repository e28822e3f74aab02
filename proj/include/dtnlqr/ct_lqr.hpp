#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

/// Augmented affine system dZ/dt = A Z + B w + c with terminal weight Q_f.
struct LinearSystem {
  Mat A;
  Mat B;
  Vec c;
  Mat Q_f;
};

LinearSystem build_system(const ModelSpec& m, const CostWeights& cw, const Mat& R);

struct BlowUp {
  double time = 0.0;  // last time reached by the backward sweep
  double norm = 0.0;  // max |P_ij| at that time
};

struct RiccatiOptions {
  int steps = 4096;        // uniform grid on [0, tau]
  double guard = 1e12;     // max |P_ij| before the sweep is abandoned
  double tol = 1e-10;      // substep error target; 0 = one RK4 step per grid interval
};

/// P on a uniform ascending grid. When the sweep escapes, `t` starts at the
/// first grid time that was still below the guard.
struct RiccatiSolution {
  std::vector<double> t;
  std::vector<Mat> P;
  std::optional<BlowUp> blow_up;
};

/// Backward RK4 sweep of P' + PA + A'P - PBB'P = 0, P(tau) = Q_f. With
/// opts.tol > 0 each grid interval is covered by substeps sized by step
/// doubling, so fast transients near tau are resolved and a finite escape is
/// caught by the guard rather than stepped over.
RiccatiSolution solve_riccati_backward(const Mat& A, const Mat& B, const Mat& Q_f, double tau,
                                       const RiccatiOptions& opts = {});

/// Closed-form P(t) = P2 P1^{-1} from the Hamiltonian exponential, for
/// diagonal Lout = diag(lambda_out) > 0. Assembles P1, P2 and solves.
Mat closed_form_P(const Vec& lambda_out, const Mat& R, double t, double tau);

/// Same solution through the explicit blocks
///   P22 = R Mx^{-1}, P12 = a P22, P21 = P22 a, P11 = a P22 a,
/// a = Lout^{-1}(I - e^{Lout x}), Mx = I + Lout^{-3} f(Lout x) R,
/// f(y) = sinh y - y - (cosh y - 1)(e^y - 1). Throws SingularMatrixError when
/// Mx is numerically singular (conjugate point for indefinite R).
Mat closed_form_P_blocks(const Vec& lambda_out, const Mat& R, double t, double tau);

/// Diagonal entries of Lout^{-3} f(Lout x): the coefficient in Mx.
Vec conjugate_kernel(const Vec& lambda_out, double x);

/// k' + A'k + Pc - PBB'k = 0, k(tau) = 0 on the grid of `P`; P is linearly
/// interpolated inside each interval.
std::vector<Vec> solve_k_backward(const RiccatiSolution& P, const Mat& A, const Mat& B,
                                  const Vec& c);

/// m at the first grid time: integral of k'c - k'BB'k/2 (trapezoidal).
double solve_m_backward(const std::vector<double>& t, const std::vector<Vec>& k, const Mat& B,
                        const Vec& c);

struct Feedback {
  Vec w;
  Vec u;
};

/// w = -B'(P Z + k), u = w + u_bar.
Feedback feedback(const Mat& P, const Vec& k, const Vec& Z, const Vec& u_bar);

/// Complete finite-horizon solution. Immutable once built.
struct CtSolution {
  LinearSystem sys;
  Mat R;
  Vec u_bar;
  double tau = 0.0;
  std::vector<double> t;
  std::vector<Mat> P;
  std::vector<Vec> k;
  double m0 = 0.0;
  std::optional<BlowUp> blow_up;
  // Every accepted substep of the sweep, ascending, with time derivatives.
  // Covers the grid nodes as a subset.
  std::vector<double> dense_t;
  std::vector<Mat> dense_P, dense_dP;
  std::vector<Vec> dense_k, dense_dk;

  /// Cubic Hermite interpolation between the dense nodes.
  Mat P_at(double time) const;
  Vec k_at(double time) const;
  double min_eig_P0() const;
  /// Z0'P(0)Z0 + 2 k(0)'Z0 + 2 m(0).
  double predicted_cost(const Vec& Z0) const;
};

CtSolution solve_ct(const ModelSpec& m, const CostWeights& cw, double tau,
                    const RiccatiOptions& opts = {});

struct RolloutOptions {
  int steps = 4096;
  int substeps = 1;  // RK4 steps per recorded interval
  double constraint_tol = 1e-9;
  // Times the integrator must land on (ascending); a step never straddles one.
  std::vector<double> breakpoints;
  double max_substep = 0.0;  // > 0 caps the RK4 step length
};

/// Open- or closed-loop control law returning w(t, Z).
using ControlLaw = std::function<Vec(double, const Vec&)>;

/// RK4 forward integration of dZ/dt = AZ + Bw + c under `law`, sampled on a
/// uniform grid. Records X, Xhat, w, u, D, violations and the cost
/// int w'w + Xhat(tau)' R Xhat(tau), with the integral carried as an extra
/// state of the same RK4 steps.
ControlledTrajectory rollout_with(const ModelSpec& m, const CostWeights& cw, const Mat& R,
                                  const ControlLaw& law, const Vec& Z0, double tau,
                                  const RolloutOptions& opts = {});

/// Rollout under the optimal feedback, stepping onto the dense nodes of the
/// sweep. Throws BlowUpError if the solution does not cover [0, tau].
ControlledTrajectory rollout(const ModelSpec& m, const CostWeights& cw, const CtSolution& sol,
                             const Vec& Z0, const RolloutOptions& opts = {});

}  // namespace dtnlqr

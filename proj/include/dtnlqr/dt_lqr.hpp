#pragma once

#include <vector>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

/// Z_{l+1} = F Z_l + B_tilde w_l + n_vec, constant over steps.
struct DiscreteSystem {
  double Delta = 0.0;
  Mat F;
  Mat B_tilde;
  Vec n_tilde;  // inflow part, B_tilde-weighted Lin N
  Vec n_vec;    // n_tilde + B_tilde u_bar
  Vec u_bar;
  Vec lambda_d;
};

/// Zero-order-hold discretization through the exact transition matrix
///   F = [[Y, 0], [Lout^{-1}(I - Y), I]],  Y = exp(-Lout Delta).
/// Delta = 0 gives the identity system. Throws on Delta < 0.
DiscreteSystem exact_discretize(const ModelSpec& m, const CostWeights& cw, double Delta);

/// Euler form F = I + A Delta, B_tilde = B Delta, n = c Delta.
DiscreteSystem first_order_discretize(const ModelSpec& m, const CostWeights& cw, double Delta);

/// Backward recursion over steps l = 0..L-1 with S[L] = Q_f, s[L] = 0.
/// Feedback w_l = -gain[l] Z_l - offset[l]; V_l(Z) = Z'S_l Z + 2 s_l'Z + r_l.
struct DiscretePolicy {
  int L = 0;
  std::vector<Mat> S;       // L + 1 entries
  std::vector<Vec> s;       // L + 1 entries
  std::vector<double> r;    // L + 1 entries
  std::vector<Mat> gain;    // L entries
  std::vector<Vec> offset;  // L entries
  bool indefinite = false;  // some I + B'SB was not positive definite

  /// Z0'S_0 Z0 + 2 s_0'Z0 + r_0, the optimal cost from Z0.
  double predicted_cost(const Vec& Z0) const;
};

/// Cost rho sum_{l<L} (w'w + Z'QZ) + Z_L'Q_f Z_L. rho = 1 is the plain
/// per-step form; rho = Delta samples the continuous integral, which is what
/// makes the discrete optimum converge to the continuous one as Delta -> 0.
/// Throws SingularMatrixError if rho I + B'SB is numerically singular.
DiscretePolicy finite_horizon_policy(const DiscreteSystem& ds, const Mat& Q, const Mat& Q_f,
                                     int L, double rho = 1.0);

/// Forward recursion under `pol`; L + 1 samples at t = l Delta. The terminal
/// sample carries w = 0, so u(tau) = u_bar.
ControlledTrajectory dt_rollout(const ModelSpec& m, const DiscreteSystem& ds,
                                const DiscretePolicy& pol, const Mat& Q, const Mat& Q_f,
                                const Vec& Z0, double constraint_tol = 1e-9, double rho = 1.0);

/// Stabilizing root of S = q + g^2 S/(1 + S b^2), evaluated in a form that
/// avoids cancellation when b^2 q + g^2 - 1 < 0.
double scalar_dare(double g, double b, double q);

struct DtScalarPolicy {
  double lambda = 0.0;
  double mu = 0.0;
  double N = 0.0;
  double u_bar = 0.0;
  double q = 0.0;
  double Delta = 0.0;
  double g = 0.0;
  double b = 0.0;
  double n = 0.0;
  double S = 0.0;
  double feedback_gain = 0.0;     // bSg/(1 + Sb^2)
  double feedforward_gain = 0.0;  // bS/(1 - g + b^2 S)
  double closed_loop = 0.0;       // g/(1 + Sb^2)
  double z_inf = 0.0;
  double x_inf = 0.0;
  double u_inf = 0.0;

  /// w for deviation z = x - N.
  double control(double z) const { return -feedback_gain * z - feedforward_gain * n; }
  /// One closed-loop step z -> g z + b w + n.
  double step(double z) const { return g * z + b * control(z) + n; }
};

/// Per-class discrete infinite-horizon policy with g = exp(-lambda Delta),
/// b = (1 - g)/lambda, n = b((mu - lambda) N + u_bar). Requires lambda, Delta > 0.
DtScalarPolicy dt_scalar_policy(double lambda, double mu, double N, double u_bar, double q,
                                double Delta);

/// Small-Delta expansions of the discrete solution.
struct SmallDeltaLimits {
  double S_Delta = 0.0;        // limit of S Delta, -lambda + sqrt(lambda^2 + q)
  double gain = 0.0;           // x coefficient of the limiting law, u = -gain x + ...
  double ref_coeff = 0.0;      // u_bar coefficient, lambda/sqrt(lambda^2 + q)
  double N_coeff = 0.0;        // N coefficient
  double expansion_x_inf = 0.0;  // N + lambda((mu - lambda) N + u_bar) Delta / sigma
  double law_x_inf = 0.0;      // fixed point of x' = -lambda x + u(x) + mu N
};

SmallDeltaLimits small_delta_limits(double lambda, double mu, double N, double u_bar, double q,
                                    double Delta);

}  // namespace dtnlqr

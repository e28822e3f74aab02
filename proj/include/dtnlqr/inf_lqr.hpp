#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

/// One decoupled class of the infinite-horizon problem
///   min int q z^2 + w^2,  dz/dt = -lambda z + w + (mu - lambda) N + u_bar,
/// with z = x - N, lambda = Lout_ii and mu = Lin_ii.
struct ScalarPolicy {
  double lambda = 0.0;
  double mu = 0.0;
  double N = 0.0;
  double u_bar = 0.0;
  double q = 0.0;
  double p = 0.0;       // ARE root -lambda + sigma
  double k_off = 0.0;   // affine offset
  double sigma = 0.0;   // sqrt(lambda^2 + q), the closed-loop rate
  double x_inf = 0.0;
  double u_inf = 0.0;
  std::optional<double> alpha;  // linear-form coefficient, absent if x_inf == 0
};

/// p = -lambda + sqrt(lambda^2 + q), the stabilizing root of
/// -2 p lambda - p^2 + q = 0.
double scalar_gain(double lambda, double q);

/// k = p (mu N - lambda N + u_bar) / sqrt(lambda^2 + q).
double scalar_offset(double lambda, double mu, double N, double u_bar, double q);

ScalarPolicy make_scalar_policy(double lambda, double mu, double N, double u_bar, double q);

/// u = u_bar - p (x - N + (u_bar + (mu - lambda) N)/(lambda + p)).
double control_law(const ScalarPolicy& pol, double x);

struct SteadyState {
  double x_inf = 0.0;
  double u_inf = 0.0;
};

/// Fixed point of dx/dt = -lambda x + control_law(x) + mu N, and
/// u_inf = lambda x_inf - mu N.
SteadyState steady_state(const ScalarPolicy& pol);

enum class BoundsVerdict { Feasible, InfeasibleBoundary, Infeasible };

std::string_view to_string(BoundsVerdict v);

struct BoundsReport {
  bool x_positive = false;     // 0 < x_inf
  bool x_below_N = false;      // x_inf < N
  bool u_above_ref = false;    // u_bar < u_inf
  bool u_negative = false;     // u_inf < 0
  BoundsVerdict verdict = BoundsVerdict::Infeasible;
};

/// Strict inequalities 0 < x_inf < N and u_bar < u_inf < 0, evaluated on
/// the derived steady state. An inequality that holds only as an equality
/// (within 1e-12 of the magnitudes involved) counts as failed, and the
/// verdict is then InfeasibleBoundary unless another one fails outright.
BoundsReport bounds_check(const ScalarPolicy& pol);

/// alpha with u = -(p + alpha) x matching the affine law at x_inf:
/// alpha = -C / x_inf where u(x) = -p x + C. Throws if x_inf == 0.
double linear_form_alpha(const ScalarPolicy& pol);

/// One policy per class: lambda = Lout_ii, mu = lambda_s, q from weights.
std::vector<ScalarPolicy> solve_infinite_horizon(const ModelSpec& m, const CostWeights& cw);

}  // namespace dtnlqr

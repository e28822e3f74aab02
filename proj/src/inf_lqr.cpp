#include "dtnlqr/inf_lqr.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>

namespace dtnlqr {

double scalar_gain(double lambda, double q) {
  if (q < 0.0 || lambda < 0.0) throw std::invalid_argument("scalar_gain: lambda, q must be >= 0");
  if (lambda == 0.0 && q == 0.0) throw std::invalid_argument("scalar_gain: lambda and q both 0");
  const double sigma = std::hypot(lambda, std::sqrt(q));
  // q / (lambda + sigma) avoids cancellation when q << lambda^2.
  return q / (lambda + sigma);
}

double scalar_offset(double lambda, double mu, double N, double u_bar, double q) {
  const double p = scalar_gain(lambda, q);
  const double sigma = lambda + p;
  return p * (mu * N - lambda * N + u_bar) / sigma;
}

double control_law(const ScalarPolicy& pol, double x) {
  return pol.u_bar -
         pol.p * (x - pol.N + (pol.u_bar + (pol.mu - pol.lambda) * pol.N) / (pol.lambda + pol.p));
}

SteadyState steady_state(const ScalarPolicy& pol) {
  // control_law(x) = -p x + C, so 0 = -(lambda + p) x + C + mu N.
  const double C = control_law(pol, 0.0);
  SteadyState s;
  s.x_inf = (C + pol.mu * pol.N) / (pol.lambda + pol.p);
  s.u_inf = pol.lambda * s.x_inf - pol.mu * pol.N;
  return s;
}

ScalarPolicy make_scalar_policy(double lambda, double mu, double N, double u_bar, double q) {
  ScalarPolicy pol;
  pol.lambda = lambda;
  pol.mu = mu;
  pol.N = N;
  pol.u_bar = u_bar;
  pol.q = q;
  pol.p = scalar_gain(lambda, q);
  pol.sigma = lambda + pol.p;
  pol.k_off = scalar_offset(lambda, mu, N, u_bar, q);
  const SteadyState ss = steady_state(pol);
  pol.x_inf = ss.x_inf;
  pol.u_inf = ss.u_inf;
  if (pol.x_inf != 0.0) pol.alpha = linear_form_alpha(pol);
  return pol;
}

std::string_view to_string(BoundsVerdict v) {
  switch (v) {
    case BoundsVerdict::Feasible: return "feasible";
    case BoundsVerdict::InfeasibleBoundary: return "infeasible-boundary";
    case BoundsVerdict::Infeasible: return "infeasible";
  }
  return "?";
}

BoundsReport bounds_check(const ScalarPolicy& pol) {
  // Rounding scales: x_inf against N, u_inf = lambda x_inf - mu N against the
  // terms it is computed from.
  const double xs = 1e-12 * std::max(1.0, std::abs(pol.N));
  const double us = 1e-12 * std::max({std::abs(pol.u_bar), std::abs(pol.lambda * pol.x_inf),
                                      std::abs(pol.mu * pol.N), 1e-300});
  // +1 clearly holds, 0 holds only up to rounding, -1 fails.
  auto less = [](double a, double b, double tol) { return a < b - tol ? 1 : (a <= b + tol ? 0 : -1); };
  const int checks[4] = {less(0.0, pol.x_inf, xs), less(pol.x_inf, pol.N, xs),
                         less(pol.u_bar, pol.u_inf, us), less(pol.u_inf, 0.0, us)};
  BoundsReport r;
  r.x_positive = checks[0] > 0;
  r.x_below_N = checks[1] > 0;
  r.u_above_ref = checks[2] > 0;
  r.u_negative = checks[3] > 0;
  const int worst = *std::min_element(std::begin(checks), std::end(checks));
  r.verdict = worst > 0    ? BoundsVerdict::Feasible
              : worst == 0 ? BoundsVerdict::InfeasibleBoundary
                           : BoundsVerdict::Infeasible;
  return r;
}

double linear_form_alpha(const ScalarPolicy& pol) {
  if (pol.x_inf == 0.0) throw std::domain_error("linear_form_alpha: x_inf is zero");
  const double C = control_law(pol, 0.0);
  return -C / pol.x_inf;
}

std::vector<ScalarPolicy> solve_infinite_horizon(const ModelSpec& m, const CostWeights& cw) {
  m.validate();
  const Index K = m.classes();
  if (cw.q.size() != K) throw DimensionError("infinite-horizon solve needs q with K entries");
  if ((cw.q.array() <= 0.0).any()) throw std::invalid_argument("q must be > 0");
  const Vec ub = cw.reference(K);
  std::vector<ScalarPolicy> out;
  out.reserve(static_cast<std::size_t>(K));
  for (Index i = 0; i < K; ++i) {
    out.push_back(make_scalar_policy(m.outflow()[i], m.lambda_s[i], m.N[i], ub[i], cw.q[i]));
  }
  return out;
}

}  // namespace dtnlqr

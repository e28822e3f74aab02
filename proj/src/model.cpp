#include "dtnlqr/model.hpp"

#include <cmath>
#include <string>

namespace dtnlqr {

namespace {

void require_size(const Vec& v, Index K, const char* name) {
  if (v.size() != K) {
    throw DimensionError(std::string(name) + " has " + std::to_string(v.size()) +
                         " entries, expected " + std::to_string(K));
  }
}

}  // namespace

void ModelSpec::validate() const {
  const Index K = classes();
  if (K < 1) throw DimensionError("model needs at least one class");
  require_size(lambda_s, K, "lambda_s");
  require_size(lambda_d, K, "lambda_d");
  if (lambda_out.size() != 0) {
    require_size(lambda_out, K, "lambda_out");
    if (!(lambda_out.array() > 0.0).all()) throw std::invalid_argument("lambda_out must be > 0");
  }
  for (Index i = 0; i < K; ++i) {
    if (!(lambda_s[i] > 0.0)) throw std::invalid_argument("lambda_s must be > 0");
    if (!(lambda_d[i] > 0.0)) throw std::invalid_argument("lambda_d must be > 0");
    if (!(N[i] > 0.0)) throw std::invalid_argument("N must be > 0");
  }
}

Vec CostWeights::reference(Index K) const {
  if (u_bar.size() == 0) return Vec::Zero(K);
  require_size(u_bar, K, "u_bar");
  return u_bar;
}

Mat CostWeights::running(Index K) const {
  if (Q.size() == 0) return Mat::Zero(2 * K, 2 * K);
  if (Q.rows() != 2 * K || Q.cols() != 2 * K) {
    throw DimensionError("Q must be " + std::to_string(2 * K) + "x" + std::to_string(2 * K));
  }
  return Q;
}

void CostWeights::validate(Index K) const {
  if (c1 < 0.0 || c3 < 0.0 || c4 < 0.0) throw std::invalid_argument("c1, c3, c4 must be >= 0");
  const Vec ub = reference(K);
  if ((ub.array() > 0.0).any()) throw std::invalid_argument("u_bar must be <= 0");
  if (q.size() != 0) require_size(q, K, "q");
  running(K);
}

AugmentedState AugmentedState::from_stacked(const Vec& Z) {
  if (Z.size() % 2 != 0) throw DimensionError("stacked state must have even length");
  const Index K = Z.size() / 2;
  return {Z.head(K), Z.tail(K)};
}

Vec AugmentedState::stacked() const {
  Vec Z(X.size() + Xhat.size());
  Z << X, Xhat;
  return Z;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::XNegative: return "X<0";
    case ViolationKind::XAboveN: return "X>N";
    case ViolationKind::UPositive: return "u>0";
    case ViolationKind::TimerNegative: return "timer<0";
  }
  return "?";
}

AugmentedState drift(const AugmentedState& Z, const Vec& w, const ModelSpec& m,
                     const CostWeights& cw) {
  const Index K = m.classes();
  require_size(Z.X, K, "X");
  require_size(Z.Xhat, K, "Xhat");
  require_size(w, K, "w");
  AugmentedState d;
  d.X = -m.outflow().cwiseProduct(Z.X) + w + m.lambda_s.cwiseProduct(m.N) + cw.reference(K);
  d.Xhat = Z.X;
  return d;
}

double delivery_functional(const Vec& Xhat, const Vec& lambda_d) {
  if (Xhat.size() != lambda_d.size()) throw DimensionError("Xhat and lambda_d differ in size");
  return -std::expm1(-lambda_d.dot(Xhat));
}

double delivery_lower_bound(const Vec& Xhat, const Vec& lambda_d) {
  if ((Xhat.array() < 0.0).any()) throw std::invalid_argument("Xhat must be nonnegative");
  return delivery_functional(Xhat, lambda_d);
}

TimerRates timer_rates_from_control(const Vec& u, const Vec& X, const ModelSpec& m,
                                    const TimerOptions& opts) {
  const Index K = m.classes();
  require_size(u, K, "u");
  require_size(X, K, "X");
  TimerRates r{Vec::Zero(K), Vec::Zero(K), {}};
  for (Index i = 0; i < K; ++i) {
    if (X[i] < 0.0) {
      throw std::invalid_argument("class " + std::to_string(i) + ": X is negative");
    }
    if (X[i] == 0.0) {
      if (u[i] < 0.0) {
        throw InfeasibleControlError("class " + std::to_string(i) +
                                     ": u < 0 with no infected relays");
      }
      // Nothing to discard; any rate realizes u = 0.
      r.M[i] = m.lambda_s[i] - m.outflow()[i];
      r.M_bar[i] = 0.0;
      continue;
    }
    r.M[i] = -u[i] / X[i];
    r.M_bar[i] = r.M[i] - m.lambda_s[i] + m.outflow()[i];
    if (r.M_bar[i] < -opts.tol) {
      r.negative.push_back(i);
      if (opts.clamp_negative) r.M_bar[i] = 0.0;
    }
  }
  return r;
}

std::vector<Violation> check_constraints(const ControlledTrajectory& traj,
                                         const ModelSpec& m, double tol) {
  std::vector<Violation> out;
  const Index K = traj.classes();
  for (Index j = 0; j < traj.samples(); ++j) {
    const double t = traj.t[static_cast<std::size_t>(j)];
    for (Index i = 0; i < K; ++i) {
      const double x = traj.X(j, i);
      const double u = traj.u(j, i);
      if (x < -tol) out.push_back({t, i, ViolationKind::XNegative, x});
      if (x > m.N[i] + tol) out.push_back({t, i, ViolationKind::XAboveN, x});
      if (u > tol) out.push_back({t, i, ViolationKind::UPositive, u});
      if (x > tol) {
        const double mbar = -u / x - m.lambda_s[i] + m.outflow()[i];
        if (mbar < -tol) out.push_back({t, i, ViolationKind::TimerNegative, mbar});
      } else if (u < -tol) {
        // Discard flow requested with (numerically) no carriers.
        out.push_back({t, i, ViolationKind::TimerNegative, u});
      }
    }
  }
  return out;
}

double evaluate_cost(const ControlledTrajectory& traj, const Mat& R) {
  const Index n = traj.samples();
  if (n == 0) return 0.0;
  double running = 0.0;
  for (Index j = 1; j < n; ++j) {
    const double h = traj.t[static_cast<std::size_t>(j)] - traj.t[static_cast<std::size_t>(j - 1)];
    running += 0.5 * h * (traj.w.row(j).squaredNorm() + traj.w.row(j - 1).squaredNorm());
  }
  const Vec xhat = traj.Xhat.row(n - 1).transpose();
  return running + xhat.dot(R * xhat);
}

}  // namespace dtnlqr

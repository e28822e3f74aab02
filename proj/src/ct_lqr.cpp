#include "dtnlqr/ct_lqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dtnlqr/detail/numerics.hpp"
#include "dtnlqr/feasibility.hpp"

namespace dtnlqr {

using detail::interval_index;
using detail::rk4_step;

LinearSystem build_system(const ModelSpec& m, const CostWeights& cw, const Mat& R) {
  const Index K = m.classes();
  if (R.rows() != K || R.cols() != K) throw DimensionError("R must be KxK");
  LinearSystem s;
  s.A = Mat::Zero(2 * K, 2 * K);
  s.A.topLeftCorner(K, K) = -m.outflow().asDiagonal().toDenseMatrix();
  s.A.bottomLeftCorner(K, K) = Mat::Identity(K, K);
  s.B = Mat::Zero(2 * K, K);
  s.B.topRows(K) = Mat::Identity(K, K);
  s.c = Vec::Zero(2 * K);
  s.c.head(K) = m.lambda_s.cwiseProduct(m.N) + cw.reference(K);
  s.Q_f = Mat::Zero(2 * K, 2 * K);
  s.Q_f.bottomRightCorner(K, K) = R;
  return s;
}

namespace {

double max_abs(const Mat& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

// Substep length keeping h * (|diag A| + |P||BB'|) bounded; the off-diagonal
// block of A is nilpotent and does not limit stability.
double stiff_step(double remaining, double a_norm, double p_norm, double bb_norm) {
  const double rate = a_norm + p_norm * bb_norm;
  if (rate <= 0.0) return remaining;
  return std::min(remaining, 0.25 / rate);
}

Mat lerp(const Mat& a, const Mat& b, double s) { return a + s * (b - a); }

}  // namespace

namespace {

// Backward sweep of Y = [P | k | m] on a uniform grid. With tol > 0 each grid
// interval is covered by RK4 substeps accepted by step doubling; with tol = 0
// one RK4 step is taken per interval.
struct Sweep {
  std::vector<double> t;
  std::vector<Mat> P;
  std::vector<Vec> k;
  double m0 = 0.0;
  std::optional<BlowUp> blow_up;
  std::vector<double> dense_t;
  std::vector<Mat> dense_P, dense_dP;
  std::vector<Vec> dense_k, dense_dk;
};

Sweep backward_sweep(const Mat& A, const Mat& B, const Vec& c, const Mat& Q_f, double tau,
                     const RiccatiOptions& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (opts.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (!(opts.tol >= 0.0)) throw std::invalid_argument("tol must be >= 0");
  const Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q_f.rows() != n || Q_f.cols() != n || c.size() != n) {
    throw DimensionError("inconsistent Riccati system");
  }
  const Mat BBt = B * B.transpose();
  const double h = tau / opts.steps;

  // dP/dt = -(PA + A'P - PBB'P), dk/dt = -(A'k + Pc - PBB'k),
  // dm/dt = -(k'c - k'BB'k/2).
  auto rhs = [&](double, const Mat& Y) -> Mat {
    const auto P = Y.leftCols(n);
    const auto k = Y.col(n);
    Mat d(n, n + 2);
    d.leftCols(n) = -(P * A + A.transpose() * P - P * BBt * P);
    d.col(n) = -(A.transpose() * k + P * c - P * (BBt * k));
    d.col(n + 1).setZero();
    d(0, n + 1) = -(k.dot(c) - 0.5 * k.dot(BBt * k));
    return d;
  };
  auto symmetrize = [&](Mat& Y) {
    Y.leftCols(n) = 0.5 * (Y.leftCols(n) + Y.leftCols(n).transpose()).eval();
  };
  auto block_err = [&](const Mat& a, const Mat& b) {
    const double sp = std::max(max_abs(b.leftCols(n)), 1e-300);
    const double sk = std::max(b.col(n).cwiseAbs().maxCoeff(), 1e-300);
    const double sm = std::max(std::abs(b(0, n + 1)), 1e-300);
    const Mat d = (a - b).cwiseAbs();
    return std::max({d.leftCols(n).maxCoeff() / sp, d.col(n).maxCoeff() / sk,
                     d(0, n + 1) / sm}) / 15.0;
  };

  Sweep out;
  std::vector<Mat> rev;
  std::vector<double> rev_t;
  rev.reserve(static_cast<std::size_t>(opts.steps) + 1);
  Mat Y = Mat::Zero(n, n + 2);
  Y.leftCols(n) = Q_f;
  symmetrize(Y);
  rev.push_back(Y);
  rev_t.push_back(tau);
  std::vector<Mat> dense{Y};
  std::vector<double> dense_t{tau};

  double hs = h;
  long substeps = 0;
  for (int j = opts.steps; j > 0 && !out.blow_up; --j) {
    const double t_lo = (j - 1) * h;
    double t = j * h;
    while (t > t_lo) {
      const double remaining = t - t_lo;
      double step = opts.tol > 0.0 ? std::min(hs, remaining) : remaining;
      Mat next;
      if (opts.tol > 0.0) {
        for (;;) {
          const Mat one = rk4_step(rhs, t, Y, -step);
          const Mat half = rk4_step(rhs, t, Y, -0.5 * step);
          Mat two = rk4_step(rhs, t - 0.5 * step, half, -0.5 * step);
          const double err = block_err(one, two);
          ++substeps;
          if (!std::isfinite(err) || substeps > 10'000'000) {
            next = two;
            break;
          }
          const double grow = err > 0.0 ? 0.9 * std::pow(opts.tol / err, 0.2) : 5.0;
          if (err <= opts.tol) {
            next = std::move(two);
            hs = step * std::clamp(grow, 0.2, 5.0);
            break;
          }
          step *= std::clamp(grow, 0.1, 0.9);
        }
      } else {
        next = rk4_step(rhs, t, Y, -step);
        ++substeps;
      }
      Y = std::move(next);
      symmetrize(Y);
      t = step >= remaining ? t_lo : t - step;
      const double norm = max_abs(Y.leftCols(n));
      if (!std::isfinite(norm) || norm > opts.guard || substeps > 10'000'000) {
        out.blow_up = BlowUp{t, norm};
        break;
      }
      dense.push_back(Y);
      dense_t.push_back(t);
    }
    if (out.blow_up) break;
    rev.push_back(Y);
    rev_t.push_back(t_lo);
  }
  const std::size_t count = rev.size();
  out.t.assign(rev_t.rbegin(), rev_t.rend());
  out.P.resize(count);
  out.k.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Mat& y = rev[count - 1 - i];
    out.P[i] = y.leftCols(n);
    out.k[i] = y.col(n);
  }
  out.m0 = rev.back()(0, n + 1);
  const std::size_t nd = dense.size();
  out.dense_t.assign(dense_t.rbegin(), dense_t.rend());
  out.dense_P.resize(nd);
  out.dense_dP.resize(nd);
  out.dense_k.resize(nd);
  out.dense_dk.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const Mat& y = dense[nd - 1 - i];
    const Mat d = rhs(out.dense_t[i], y);
    out.dense_P[i] = y.leftCols(n);
    out.dense_dP[i] = d.leftCols(n);
    out.dense_k[i] = y.col(n);
    out.dense_dk[i] = d.col(n);
  }
  return out;
}

}  // namespace

RiccatiSolution solve_riccati_backward(const Mat& A, const Mat& B, const Mat& Q_f, double tau,
                                       const RiccatiOptions& opts) {
  Sweep s = backward_sweep(A, B, Vec::Zero(A.rows()), Q_f, tau, opts);
  return RiccatiSolution{std::move(s.t), std::move(s.P), s.blow_up};
}

Vec conjugate_kernel(const Vec& lambda_out, double x) {
  Vec d(lambda_out.size());
  for (Index i = 0; i < d.size(); ++i) {
    const double l = lambda_out[i];
    d[i] = detail::conjugate_f(l * x) / (l * l * l);
  }
  return d;
}

namespace {

void check_lambda_out(const Vec& lambda_out, const Mat& R) {
  if (R.rows() != lambda_out.size() || R.cols() != lambda_out.size()) {
    throw DimensionError("R must match lambda_out");
  }
  if ((lambda_out.array() <= 0.0).any()) {
    throw std::invalid_argument("closed form needs lambda_out > 0");
  }
}

}  // namespace

Mat closed_form_P(const Vec& lambda_out, const Mat& R, double t, double tau) {
  check_lambda_out(lambda_out, R);
  const Index K = lambda_out.size();
  const double x = t - tau;
  Vec e11(K), e21(K), e14(K), e24(K), e34(K);
  for (Index i = 0; i < K; ++i) {
    const double l = lambda_out[i];
    const double y = l * x;
    e11[i] = std::exp(-y);
    e21[i] = -std::expm1(-y) / l;
    e14[i] = detail::cosh_minus_one(y) / (l * l);
    e24[i] = detail::sinh_minus_id(y) / (l * l * l);
    e34[i] = -std::expm1(y) / l;
  }
  Mat P1 = Mat::Zero(2 * K, 2 * K);
  P1.topLeftCorner(K, K) = e11.asDiagonal();
  P1.topRightCorner(K, K) = e14.asDiagonal() * R;
  P1.bottomLeftCorner(K, K) = e21.asDiagonal();
  P1.bottomRightCorner(K, K) = Mat::Identity(K, K) + e24.asDiagonal() * R;
  Mat P2 = Mat::Zero(2 * K, 2 * K);
  P2.topRightCorner(K, K) = e34.asDiagonal() * R;
  P2.bottomRightCorner(K, K) = R;

  // P P1 = P2  <=>  P1' P' = P2'
  Eigen::PartialPivLU<Mat> lu(P1.transpose());
  const double rc = lu.rcond();
  if (!(rc > 1e-14)) {
    throw SingularMatrixError("P1 is singular at t=" + std::to_string(t), rc);
  }
  return lu.solve(P2.transpose()).transpose();
}

Mat closed_form_P_blocks(const Vec& lambda_out, const Mat& R, double t, double tau) {
  check_lambda_out(lambda_out, R);
  const Index K = lambda_out.size();
  const double x = t - tau;
  Vec a(K);
  for (Index i = 0; i < K; ++i) a[i] = -std::expm1(lambda_out[i] * x) / lambda_out[i];
  const Mat Mx = Mat::Identity(K, K) + conjugate_kernel(lambda_out, x).asDiagonal() * R;
  // R Mx^{-1} = (Mx'^{-1} R)'
  Eigen::PartialPivLU<Mat> lu(Mx.transpose());
  const double rc = lu.rcond();
  if (!(rc > 1e-14)) {
    throw SingularMatrixError("Mx is singular at t=" + std::to_string(t), rc);
  }
  const Mat P22 = lu.solve(R).transpose();
  Mat P(2 * K, 2 * K);
  P.bottomRightCorner(K, K) = P22;
  P.topRightCorner(K, K) = a.asDiagonal() * P22;
  P.bottomLeftCorner(K, K) = P22 * a.asDiagonal();
  P.topLeftCorner(K, K) = a.asDiagonal() * P22 * a.asDiagonal();
  return P;
}

std::vector<Vec> solve_k_backward(const RiccatiSolution& sol, const Mat& A, const Mat& B,
                                  const Vec& c) {
  const std::size_t n = sol.P.size();
  std::vector<Vec> k(n);
  if (n == 0) return k;
  const Mat BBt = B * B.transpose();
  const double a_norm = A.diagonal().cwiseAbs().maxCoeff();
  const double bb_norm = BBt.cwiseAbs().rowwise().sum().maxCoeff();
  k[n - 1] = Vec::Zero(c.size());
  for (std::size_t j = n - 1; j > 0; --j) {
    const double t_hi = sol.t[j];
    const double t_lo = sol.t[j - 1];
    const Mat& P_lo = sol.P[j - 1];
    const Mat& P_hi = sol.P[j];
    auto P_of = [&](double t) { return lerp(P_lo, P_hi, (t - t_lo) / (t_hi - t_lo)); };
    // dk/dt = -(A'k + Pc - PBB'k)
    auto rhs = [&](double t, const Vec& kk) -> Vec {
      const Mat P = P_of(t);
      return -(A.transpose() * kk + P * c - P * (BBt * kk));
    };
    const double p_norm = std::max(max_abs(P_lo), max_abs(P_hi));
    Vec kk = k[j];
    double t = t_hi;
    while (t > t_lo) {
      const double hs = stiff_step(t - t_lo, a_norm, p_norm, bb_norm);
      const bool last = hs >= t - t_lo;
      kk = rk4_step(rhs, t, kk, -hs);
      t = last ? t_lo : t - hs;
    }
    k[j - 1] = kk;
  }
  return k;
}

double solve_m_backward(const std::vector<double>& t, const std::vector<Vec>& k, const Mat& B,
                        const Vec& c) {
  if (t.size() != k.size()) throw DimensionError("k must be sampled on the time grid");
  auto integrand = [&](const Vec& kk) {
    const Vec btk = B.transpose() * kk;
    return kk.dot(c) - 0.5 * btk.squaredNorm();
  };
  double m = 0.0;
  for (std::size_t j = 1; j < t.size(); ++j) {
    m += 0.5 * (t[j] - t[j - 1]) * (integrand(k[j]) + integrand(k[j - 1]));
  }
  return m;
}

Feedback feedback(const Mat& P, const Vec& k, const Vec& Z, const Vec& u_bar) {
  const Index K = u_bar.size();
  if (P.rows() != 2 * K || k.size() != 2 * K || Z.size() != 2 * K) {
    throw DimensionError("feedback: inconsistent dimensions");
  }
  Feedback f;
  f.w = -(P.topRows(K) * Z + k.head(K));
  f.u = f.w + u_bar;
  return f;
}

namespace {

struct HermiteWeights {
  std::size_t j = 0;
  double h00 = 1.0, h10 = 0.0, h01 = 0.0, h11 = 0.0;
};

HermiteWeights hermite(const std::vector<double>& t, double time) {
  HermiteWeights w;
  if (t.size() < 2) return w;
  auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t j = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
  j = std::min(j, t.size() - 2);
  const double h = t[j + 1] - t[j];
  const double s = std::clamp((time - t[j]) / h, 0.0, 1.0);
  const double s2 = s * s;
  const double s3 = s2 * s;
  w.j = j;
  w.h00 = 2 * s3 - 3 * s2 + 1;
  w.h10 = (s3 - 2 * s2 + s) * h;
  w.h01 = -2 * s3 + 3 * s2;
  w.h11 = (s3 - s2) * h;
  return w;
}

}  // namespace

Mat CtSolution::P_at(double time) const {
  if (dense_t.size() < 2) return P.front();
  const HermiteWeights w = hermite(dense_t, time);
  const std::size_t j = w.j;
  return w.h00 * dense_P[j] + w.h10 * dense_dP[j] + w.h01 * dense_P[j + 1] +
         w.h11 * dense_dP[j + 1];
}

Vec CtSolution::k_at(double time) const {
  if (dense_t.size() < 2) return k.front();
  const HermiteWeights w = hermite(dense_t, time);
  const std::size_t j = w.j;
  return w.h00 * dense_k[j] + w.h10 * dense_dk[j] + w.h01 * dense_k[j + 1] +
         w.h11 * dense_dk[j + 1];
}

double CtSolution::min_eig_P0() const {
  Eigen::SelfAdjointEigenSolver<Mat> es(P.front(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

double CtSolution::predicted_cost(const Vec& Z0) const {
  return Z0.dot(P.front() * Z0) + 2.0 * k.front().dot(Z0) + 2.0 * m0;
}

CtSolution solve_ct(const ModelSpec& m, const CostWeights& cw, double tau,
                    const RiccatiOptions& opts) {
  m.validate();
  cw.validate(m.classes());
  CtSolution s;
  s.R = build_R(cw, m);
  s.sys = build_system(m, cw, s.R);
  s.u_bar = cw.reference(m.classes());
  s.tau = tau;
  Sweep sw = backward_sweep(s.sys.A, s.sys.B, s.sys.c, s.sys.Q_f, tau, opts);
  s.t = std::move(sw.t);
  s.P = std::move(sw.P);
  s.k = std::move(sw.k);
  s.blow_up = sw.blow_up;
  s.m0 = s.blow_up ? std::numeric_limits<double>::quiet_NaN() : sw.m0;
  s.dense_t = std::move(sw.dense_t);
  s.dense_P = std::move(sw.dense_P);
  s.dense_dP = std::move(sw.dense_dP);
  s.dense_k = std::move(sw.dense_k);
  s.dense_dk = std::move(sw.dense_dk);
  return s;
}

ControlledTrajectory rollout_with(const ModelSpec& m, const CostWeights& cw, const Mat& R,
                                  const ControlLaw& law, const Vec& Z0, double tau,
                                  const RolloutOptions& opts) {
  const Index K = m.classes();
  if (Z0.size() != 2 * K) throw DimensionError("Z0 must have 2K entries");
  if (opts.steps < 1) throw std::invalid_argument("steps must be >= 1");
  const Vec ub = cw.reference(K);
  const Vec inflow = m.lambda_s.cwiseProduct(m.N) + ub;
  // State (X, Xhat, running cost).
  auto rhs = [&](double t, const Vec& Y) -> Vec {
    const Vec Z = Y.head(2 * K);
    const Vec w = law(t, Z);
    Vec d(2 * K + 1);
    d.head(K) = -m.outflow().cwiseProduct(Z.head(K)) + w + inflow;
    d.segment(K, K) = Z.head(K);
    d[2 * K] = w.squaredNorm();
    return d;
  };

  const Index n = opts.steps + 1;
  ControlledTrajectory tr;
  tr.t.resize(static_cast<std::size_t>(n));
  tr.X.resize(n, K);
  tr.Xhat.resize(n, K);
  tr.u.resize(n, K);
  tr.w.resize(n, K);
  tr.D.resize(n);
  const double h = tau / opts.steps;
  Vec Y = Vec::Zero(2 * K + 1);
  Y.head(2 * K) = Z0;
  auto record = [&](Index j, double t) {
    const Vec Z = Y.head(2 * K);
    const Vec w = law(t, Z);
    tr.t[static_cast<std::size_t>(j)] = t;
    tr.X.row(j) = Z.head(K).transpose();
    tr.Xhat.row(j) = Z.tail(K).transpose();
    tr.w.row(j) = w.transpose();
    tr.u.row(j) = (w + ub).transpose();
    tr.D[j] = delivery_functional(Z.tail(K), m.lambda_d);
  };
  record(0, 0.0);
  double cap = h / std::max(1, opts.substeps);
  if (opts.max_substep > 0.0) cap = std::min(cap, opts.max_substep);
  const std::vector<double>& bp = opts.breakpoints;
  auto advance = [&](double a, double b) {
    if (!(b > a)) return;
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / cap * (1.0 - 1e-12))));
    const double hs = (b - a) / pieces;
    for (int s = 0; s < pieces; ++s) Y = rk4_step(rhs, a + s * hs, Y, hs);
  };
  for (Index j = 1; j < n; ++j) {
    const double a = (j - 1) * h;
    const double b = j == n - 1 ? tau : j * h;
    const double eps = 1e-12 * std::max(1.0, tau);
    double t = a;
    for (auto it = std::upper_bound(bp.begin(), bp.end(), a + eps);
         it != bp.end() && *it < b - eps; ++it) {
      advance(t, *it);
      t = *it;
    }
    advance(t, b);
    record(j, b);
  }
  tr.cost = Y[2 * K] + tr.Xhat.row(n - 1).dot(R * tr.Xhat.row(n - 1).transpose());
  tr.violations = check_constraints(tr, m, opts.constraint_tol);
  return tr;
}

ControlledTrajectory rollout(const ModelSpec& m, const CostWeights& cw, const CtSolution& sol,
                             const Vec& Z0, const RolloutOptions& opts) {
  if (sol.blow_up) {
    throw BlowUpError("Riccati solution escapes at t=" + std::to_string(sol.blow_up->time),
                      sol.blow_up->time);
  }
  const Index K = m.classes();
  ControlLaw law = [&](double t, const Vec& Z) -> Vec {
    return -(sol.P_at(t).topRows(K) * Z + sol.k_at(t).head(K));
  };
  double p_norm = 0.0;
  for (const Mat& P : sol.P) p_norm = std::max(p_norm, max_abs(P));
  RolloutOptions o = opts;
  const double rate = m.outflow().maxCoeff() + p_norm;
  if (rate > 0.0) {
    const double cap = 0.25 / rate;
    o.max_substep = o.max_substep > 0.0 ? std::min(o.max_substep, cap) : cap;
  }
  if (o.breakpoints.empty()) o.breakpoints = sol.dense_t;
  return rollout_with(m, cw, sol.R, law, Z0, sol.tau, o);
}

}  // namespace dtnlqr

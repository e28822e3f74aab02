#include "dtnlqr/dt_lqr.hpp"

#include <cmath>
#include <stdexcept>

#include "dtnlqr/detail/numerics.hpp"
#include "dtnlqr/inf_lqr.hpp"

namespace dtnlqr {

namespace {

void check_delta(double Delta) {
  if (!(Delta >= 0.0) || !std::isfinite(Delta)) {
    throw std::invalid_argument("Delta must be finite and >= 0");
  }
}

DiscreteSystem base_system(const ModelSpec& m, const CostWeights& cw, double Delta) {
  m.validate();
  check_delta(Delta);
  const Index K = m.classes();
  DiscreteSystem ds;
  ds.Delta = Delta;
  ds.u_bar = cw.reference(K);
  ds.lambda_d = m.lambda_d;
  ds.F = Mat::Identity(2 * K, 2 * K);
  ds.B_tilde = Mat::Zero(2 * K, K);
  return ds;
}

void finish_affine(DiscreteSystem& ds, const ModelSpec& m) {
  const Vec inflow = m.lambda_s.cwiseProduct(m.N);
  ds.n_tilde = ds.B_tilde * inflow;
  ds.n_vec = ds.n_tilde + ds.B_tilde * ds.u_bar;
}

}  // namespace

DiscreteSystem exact_discretize(const ModelSpec& m, const CostWeights& cw, double Delta) {
  DiscreteSystem ds = base_system(m, cw, Delta);
  const Index K = m.classes();
  for (Index i = 0; i < K; ++i) {
    const double y = m.outflow()[i] * Delta;
    const double one_minus_Y = Delta * detail::phi1(y);  // (1 - e^{-y})/lambda
    ds.F(i, i) = std::exp(-y);
    ds.F(K + i, i) = one_minus_Y;
    ds.B_tilde(i, i) = one_minus_Y;
    ds.B_tilde(K + i, i) = Delta * Delta * detail::phi2(y);
  }
  finish_affine(ds, m);
  return ds;
}

DiscreteSystem first_order_discretize(const ModelSpec& m, const CostWeights& cw, double Delta) {
  DiscreteSystem ds = base_system(m, cw, Delta);
  const Index K = m.classes();
  for (Index i = 0; i < K; ++i) {
    ds.F(i, i) = 1.0 - m.outflow()[i] * Delta;
    ds.F(K + i, i) = Delta;
    ds.B_tilde(i, i) = Delta;
  }
  finish_affine(ds, m);
  return ds;
}

double DiscretePolicy::predicted_cost(const Vec& Z0) const {
  return Z0.dot(S.front() * Z0) + 2.0 * s.front().dot(Z0) + r.front();
}

DiscretePolicy finite_horizon_policy(const DiscreteSystem& ds, const Mat& Q, const Mat& Q_f,
                                     int L, double rho) {
  if (L < 1) throw std::invalid_argument("L must be >= 1");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be > 0");
  const Index n = ds.F.rows();
  const Index k = ds.B_tilde.cols();
  if (Q.rows() != n || Q.cols() != n || Q_f.rows() != n || Q_f.cols() != n) {
    throw DimensionError("Q and Q_f must be 2K x 2K");
  }
  DiscretePolicy pol;
  pol.L = L;
  const auto Ls = static_cast<std::size_t>(L);
  pol.S.resize(Ls + 1);
  pol.s.resize(Ls + 1);
  pol.r.resize(Ls + 1);
  pol.gain.resize(Ls);
  pol.offset.resize(Ls);
  pol.S[Ls] = 0.5 * (Q_f + Q_f.transpose());
  pol.s[Ls] = Vec::Zero(n);
  pol.r[Ls] = 0.0;

  const Mat& F = ds.F;
  const Mat& Bt = ds.B_tilde;
  const Vec& nv = ds.n_vec;
  const Mat I = Mat::Identity(n, n);
  for (std::size_t l = Ls; l-- > 0;) {
    const Mat& Sn = pol.S[l + 1];
    const Vec& sn = pol.s[l + 1];
    const Mat G = rho * Mat::Identity(k, k) + Bt.transpose() * Sn * Bt;
    Eigen::LDLT<Mat> ldlt(G);
    Mat P;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        (ldlt.vectorD().array() > 0.0).all()) {
      P = ldlt.solve(Bt.transpose());
    } else {
      pol.indefinite = true;
      Eigen::FullPivLU<Mat> lu(G);
      const double rc = lu.rcond();
      if (!(rc > 1e-14)) throw SingularMatrixError("rho I + B'SB is singular", rc);
      P = lu.solve(Bt.transpose());
    }
    const Mat T = I - Bt * P * Sn;
    const Vec Sn_n = Sn * nv + sn;
    Mat S = rho * Q + F.transpose() * Sn * T * F;
    pol.S[l] = 0.5 * (S + S.transpose());
    pol.s[l] = F.transpose() * T.transpose() * Sn_n;
    pol.r[l] = pol.r[l + 1] + nv.dot(Sn * nv) + 2.0 * sn.dot(nv) - Sn_n.dot(Bt * (P * Sn_n));
    pol.gain[l] = P * Sn * F;
    pol.offset[l] = P * Sn_n;
  }
  return pol;
}

ControlledTrajectory dt_rollout(const ModelSpec& m, const DiscreteSystem& ds,
                                const DiscretePolicy& pol, const Mat& Q, const Mat& Q_f,
                                const Vec& Z0, double constraint_tol, double rho) {
  const Index K = m.classes();
  if (Z0.size() != 2 * K || ds.F.rows() != 2 * K) throw DimensionError("Z0 must have 2K entries");
  const Index n = pol.L + 1;
  ControlledTrajectory tr;
  tr.t.resize(static_cast<std::size_t>(n));
  tr.X.resize(n, K);
  tr.Xhat.resize(n, K);
  tr.u.resize(n, K);
  tr.w.resize(n, K);
  tr.D.resize(n);
  Vec Z = Z0;
  double cost = 0.0;
  for (Index l = 0; l < n; ++l) {
    Vec w = Vec::Zero(K);
    if (l < pol.L) {
      const auto ls = static_cast<std::size_t>(l);
      w = -pol.gain[ls] * Z - pol.offset[ls];
    }
    tr.t[static_cast<std::size_t>(l)] = static_cast<double>(l) * ds.Delta;
    tr.X.row(l) = Z.head(K).transpose();
    tr.Xhat.row(l) = Z.tail(K).transpose();
    tr.w.row(l) = w.transpose();
    tr.u.row(l) = (w + ds.u_bar).transpose();
    tr.D[l] = delivery_functional(Z.tail(K), m.lambda_d);
    if (l < pol.L) {
      cost += rho * (w.squaredNorm() + Z.dot(Q * Z));
      Z = ds.F * Z + ds.B_tilde * w + ds.n_vec;
    } else {
      cost += Z.dot(Q_f * Z);
    }
  }
  tr.cost = cost;
  tr.violations = check_constraints(tr, m, constraint_tol);
  return tr;
}

double scalar_dare(double g, double b, double q) {
  if (!(b > 0.0) || !(q >= 0.0) || !(g > 0.0 && g < 1.0)) {
    throw std::invalid_argument("scalar_dare needs b > 0, q >= 0, 0 < g < 1");
  }
  const double a = b * b * q + g * g - 1.0;
  const double root = std::sqrt(a * a + 4.0 * q * b * b);
  if (a >= 0.0) return (a + root) / (2.0 * b * b);
  return 2.0 * q / (root - a);
}

DtScalarPolicy dt_scalar_policy(double lambda, double mu, double N, double u_bar, double q,
                                double Delta) {
  if (!(lambda > 0.0) || !(Delta > 0.0)) {
    throw std::invalid_argument("dt_scalar_policy needs lambda > 0 and Delta > 0");
  }
  DtScalarPolicy p;
  p.lambda = lambda;
  p.mu = mu;
  p.N = N;
  p.u_bar = u_bar;
  p.q = q;
  p.Delta = Delta;
  p.g = std::exp(-lambda * Delta);
  p.b = Delta * detail::phi1(lambda * Delta);
  p.n = p.b * ((mu - lambda) * N + u_bar);
  p.S = scalar_dare(p.g, p.b, q);
  const double sb2 = p.S * p.b * p.b;
  const double one_minus_g = -std::expm1(-lambda * Delta);
  p.feedback_gain = p.b * p.S * p.g / (1.0 + sb2);
  p.feedforward_gain = p.b * p.S / (one_minus_g + sb2);
  p.closed_loop = p.g / (1.0 + sb2);
  p.z_inf = one_minus_g * (1.0 + sb2) / ((one_minus_g + sb2) * (one_minus_g + sb2)) * p.n;
  p.x_inf = p.z_inf + N;
  p.u_inf = u_bar + p.control(p.z_inf);
  return p;
}

SmallDeltaLimits small_delta_limits(double lambda, double mu, double N, double u_bar, double q,
                                    double Delta) {
  const double sigma = std::sqrt(lambda * lambda + q);
  const double p = scalar_gain(lambda, q);
  SmallDeltaLimits out;
  out.S_Delta = p;
  out.gain = p;
  out.ref_coeff = lambda / sigma;
  out.N_coeff = p * (sigma - mu + lambda) / sigma;
  out.expansion_x_inf = N + lambda * (mu - lambda) * N / sigma * Delta + lambda / sigma * u_bar * Delta;
  // u = -p x + C with C = ref_coeff u_bar + N_coeff N.
  const double C = out.ref_coeff * u_bar + out.N_coeff * N;
  out.law_x_inf = (C + mu * N) / (lambda + p);
  return out;
}

}  // namespace dtnlqr

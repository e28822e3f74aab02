#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "dtnlqr/ct_lqr.hpp"
#include "dtnlqr/dt_lqr.hpp"
#include "dtnlqr/feasibility.hpp"
#include "dtnlqr/inf_lqr.hpp"
#include "dtnlqr/scenario.hpp"
#include "support.hpp"

using namespace dtnlqr;
using test_support::rel_diff;
using test_support::vec;

namespace {

ModelSpec two_class() {
  ModelSpec m;
  m.lambda_s = vec({0.5, 0.8});
  m.lambda_d = vec({1.0, 2.0});
  m.lambda_out = vec({1.5, 0.7});
  m.N = vec({5.0, 4.0});
  return m;
}

Mat terminal(const Mat& R) {
  const Index K = R.rows();
  Mat Q_f = Mat::Zero(2 * K, 2 * K);
  Q_f.bottomRightCorner(K, K) = R;
  return Q_f;
}

struct Solved {
  Scenario sc;
  Mat Q_f;
  Vec Z0;
};

Solved load(const char* name) {
  Solved s{parse_scenario(test_support::scenario(name)), Mat(), Vec()};
  s.Q_f = terminal(build_R(s.sc.weights, s.sc.model));
  s.Z0 = Vec::Zero(2 * s.sc.model.classes());
  return s;
}

ControlledTrajectory solve_dt(const Solved& s, int L) {
  const double Delta = s.sc.horizon / L;
  const DiscreteSystem ds = exact_discretize(s.sc.model, s.sc.weights, Delta);
  const Mat Q = s.sc.weights.running(s.sc.model.classes());
  const DiscretePolicy pol = finite_horizon_policy(ds, Q, s.Q_f, L, Delta);
  return dt_rollout(s.sc.model, ds, pol, Q, s.Q_f, s.Z0, 1e-9, Delta);
}

}  // namespace

TEST_CASE("exact_discretize: scalar transition matrix") {
  ModelSpec m;
  m.lambda_s = vec({1.0});
  m.lambda_d = vec({2.0});
  m.N = vec({3.0});
  const DiscreteSystem ds = exact_discretize(m, CostWeights{}, 0.5);
  CHECK(ds.F(0, 0) == doctest::Approx(0.367879441171).epsilon(1e-11));
  CHECK(ds.F(0, 1) == 0.0);
  CHECK(ds.F(1, 0) == doctest::Approx(0.316060279414).epsilon(1e-11));
  CHECK(ds.F(1, 1) == 1.0);
}

TEST_CASE("exact_discretize: zero step is the identity, negative step rejected") {
  const DiscreteSystem ds = exact_discretize(two_class(), CostWeights{}, 0.0);
  CHECK(ds.F == Mat::Identity(4, 4));
  CHECK(ds.B_tilde.isZero());
  CHECK(ds.n_vec.isZero());
  CHECK_THROWS_AS(exact_discretize(two_class(), CostWeights{}, -1.0), std::invalid_argument);
}

TEST_CASE("exact_discretize matches the augmented matrix exponential") {
  const ModelSpec m = two_class();
  CostWeights cw;
  cw.u_bar = vec({-0.1, -0.3});
  const LinearSystem s = build_system(m, cw, Mat::Zero(2, 2));
  for (double Delta : {1e-3, 0.1, 0.8, 3.0}) {
    Mat M = Mat::Zero(7, 7);
    M.topLeftCorner(4, 4) = s.A;
    M.block(0, 4, 4, 2) = s.B;
    M.block(0, 6, 4, 1) = s.c;
    const Mat E = (M * Delta).exp();
    const DiscreteSystem ds = exact_discretize(m, cw, Delta);
    CHECK(rel_diff(ds.F, E.topLeftCorner(4, 4)) <= 1e-12);
    CHECK(rel_diff(ds.B_tilde, E.block(0, 4, 4, 2)) <= 1e-12);
    CHECK(rel_diff(ds.n_vec, E.block(0, 6, 4, 1)) <= 1e-12);
  }
}

TEST_CASE("exact_discretize: difference quotients approach the continuous system") {
  const ModelSpec m = two_class();
  CostWeights cw;
  cw.u_bar = vec({-0.1, -0.3});
  const LinearSystem s = build_system(m, cw, Mat::Zero(2, 2));
  double C_prev = 0.0;
  for (double Delta : {1e-2, 1e-3}) {
    const DiscreteSystem ds = exact_discretize(m, cw, Delta);
    const Mat I = Mat::Identity(4, 4);
    const double eF = ((ds.F - I) / Delta - s.A).cwiseAbs().maxCoeff();
    const double eB = (ds.B_tilde / Delta - s.B).cwiseAbs().maxCoeff();
    const double en = (ds.n_vec / Delta - s.c).cwiseAbs().maxCoeff();
    const double C = eF / Delta;
    CHECK(eB <= 2.0 * Delta);
    CHECK(en <= 10.0 * Delta);
    if (C_prev > 0.0) CHECK(C == doctest::Approx(C_prev).epsilon(0.02));
    C_prev = C;
  }
}

TEST_CASE("first_order_discretize: Euler form") {
  ModelSpec m;
  m.lambda_s = vec({1.0});
  m.lambda_d = vec({2.0});
  m.N = vec({3.0});
  const DiscreteSystem ds = first_order_discretize(m, CostWeights{}, 0.01);
  Mat F(2, 2);
  F << 0.98, 0, 0.01, 1;
  CHECK(rel_diff(ds.F, F) <= 1e-15);
  CHECK(first_order_discretize(m, CostWeights{}, 0.0).F == Mat::Identity(2, 2));

  double C_prev = 0.0;
  for (double Delta : {1e-2, 1e-3}) {
    const double e = (exact_discretize(two_class(), CostWeights{}, Delta).F -
                      first_order_discretize(two_class(), CostWeights{}, Delta).F)
                         .cwiseAbs()
                         .maxCoeff();
    const double C = e / (Delta * Delta);
    if (C_prev > 0.0) CHECK(C == doctest::Approx(C_prev).epsilon(0.02));
    C_prev = C;
  }
}

TEST_CASE("finite_horizon_policy: zero weights give zero control") {
  const DiscreteSystem ds = exact_discretize(two_class(), CostWeights{}, 0.1);
  const DiscretePolicy pol = finite_horizon_policy(ds, Mat::Zero(4, 4), Mat::Zero(4, 4), 10);
  for (const Mat& S : pol.S) CHECK(S.isZero());
  for (const Vec& s : pol.s) CHECK(s.isZero());
  const ControlledTrajectory tr =
      dt_rollout(two_class(), ds, pol, Mat::Zero(4, 4), Mat::Zero(4, 4), Vec::Zero(4));
  CHECK(tr.w.isZero());
  CHECK(tr.cost == 0.0);
}

TEST_CASE("finite_horizon_policy: one scalar step by hand") {
  ModelSpec m;
  m.lambda_s = vec({0.5});
  m.lambda_d = vec({1.0});
  m.N = vec({4.0});
  CostWeights cw;
  cw.u_bar = vec({-0.2});
  const DiscreteSystem ds = exact_discretize(m, cw, 0.3);
  Mat Q_f(2, 2);
  Q_f << 0.5, 0.1, 0.1, 2.0;
  Mat Q(2, 2);
  Q << 0.3, 0.0, 0.0, 0.1;
  const DiscretePolicy pol = finite_horizon_policy(ds, Q, Q_f, 1);

  // min_w w^2 + (F z + b w + n)' Q_f (F z + b w + n) + 2 * 0 ... with z free:
  // w* = -(b'Q_f(Fz + n))/(1 + b'Q_f b).
  const Vec b = ds.B_tilde.col(0);
  const double g = 1.0 + b.dot(Q_f * b);
  const Mat S0 = Q + ds.F.transpose() * (Q_f - Q_f * b * b.transpose() * Q_f / g) * ds.F;
  const Vec h = Q_f * ds.n_vec;
  const Vec s0 = ds.F.transpose() * (h - Q_f * b * b.dot(h) / g);
  const double r0 = ds.n_vec.dot(Q_f * ds.n_vec) - b.dot(h) * b.dot(h) / g;
  CHECK(rel_diff(pol.S[0], S0) <= 1e-12);
  CHECK(rel_diff(pol.s[0], s0) <= 1e-12);
  CHECK(pol.r[0] == doctest::Approx(r0).epsilon(1e-12));
  CHECK(pol.S[1] == Q_f);
  CHECK(pol.s[1].isZero());

  // Brute-force minimization over w from a sample state.
  const Vec z = vec({1.3, 0.7});
  auto J = [&](double w) {
    const Vec next = ds.F * z + b * w + ds.n_vec;
    return w * w + z.dot(Q * z) + next.dot(Q_f * next);
  };
  const double w_star = -(pol.gain[0] * z + pol.offset[0])(0);
  CHECK(J(w_star) <= J(w_star + 1e-4));
  CHECK(J(w_star) <= J(w_star - 1e-4));
  CHECK(J(w_star) == doctest::Approx(pol.predicted_cost(z)).epsilon(1e-12));
}

TEST_CASE("finite_horizon_policy: invariants and the predicted cost") {
  const Solved s = load("small_indefinite");
  const DiscreteSystem ds = exact_discretize(s.sc.model, s.sc.weights, s.sc.horizon / 128);
  const Mat Q = Mat::Identity(4, 4) * 0.01;
  for (double rho : {1.0, s.sc.horizon / 128}) {
    const DiscretePolicy pol = finite_horizon_policy(ds, Q, s.Q_f, 128, rho);
    CHECK(pol.S.size() == 129);
    CHECK(pol.gain.size() == 128);
    CHECK(pol.S.back() == s.Q_f);
    for (const Mat& S : pol.S) CHECK(S == S.transpose());
    const ControlledTrajectory tr = dt_rollout(s.sc.model, ds, pol, Q, s.Q_f, s.Z0, 1e-9, rho);
    CHECK(tr.cost == doctest::Approx(pol.predicted_cost(s.Z0)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(finite_horizon_policy(ds, Q, s.Q_f, 0), std::invalid_argument);
  CHECK_THROWS_AS(finite_horizon_policy(ds, Q, s.Q_f, 4, 0.0), std::invalid_argument);
}

TEST_CASE("dt_rollout: uncontrolled affine flow is exact") {
  const double l = 0.4;
  ModelSpec m;
  m.lambda_s = vec({l});
  m.lambda_d = vec({l});
  m.N = vec({10.0});
  const DiscreteSystem ds = exact_discretize(m, CostWeights{}, 0.25);
  const DiscretePolicy pol = finite_horizon_policy(ds, Mat::Zero(2, 2), Mat::Zero(2, 2), 40);
  ControlledTrajectory tr = dt_rollout(m, ds, pol, Mat::Zero(2, 2), Mat::Zero(2, 2), Vec::Zero(2));
  for (Index j = 0; j < tr.samples(); ++j) {
    const double t = tr.t[static_cast<std::size_t>(j)];
    CHECK(tr.X(j, 0) == doctest::Approx(-10.0 * std::expm1(-l * t)).epsilon(1e-12));
    CHECK(tr.Xhat(j, 0) == doctest::Approx(10.0 * (t + std::expm1(-l * t) / l)).epsilon(1e-12));
  }
  tr = dt_rollout(m, ds, pol, Mat::Zero(2, 2), Mat::Zero(2, 2), vec({10.0, 0.0}));
  for (Index j = 0; j < tr.samples(); ++j) CHECK(tr.X(j, 0) == doctest::Approx(10.0));
}

TEST_CASE("discrete cost converges to the continuous cost as Delta shrinks") {
  const Solved s = load("small_indefinite");
  const CtSolution ct = solve_ct(s.sc.model, s.sc.weights, s.sc.horizon, {4096});
  const double target = ct.predicted_cost(s.Z0);
  const double e1 = std::abs(solve_dt(s, 64).cost - target);
  const double e2 = std::abs(solve_dt(s, 128).cost - target);
  const double e3 = std::abs(solve_dt(s, 256).cost - target);
  CHECK(std::log2(e1 / e2) >= 1.0);
  CHECK(std::log2(e2 / e3) >= 1.0);
}

// Stands in for the indefinite reference scenario, which has no continuous
// solution over the full horizon.
TEST_CASE("heterogeneous scenario: discrete solution tracks the continuous one") {
  const Solved s = load("fig4");
  const int steps = 4096;
  const CtSolution ct = solve_ct(s.sc.model, s.sc.weights, s.sc.horizon, {steps});
  RolloutOptions ro;
  ro.steps = steps;
  const ControlledTrajectory cref = rollout(s.sc.model, s.sc.weights, ct, s.Z0, ro);

  const ControlledTrajectory fine = solve_dt(s, 4096);
  CHECK(std::abs(fine.cost - cref.cost) / cref.cost <= 0.01);

}

TEST_CASE("discrete trajectory converges to the continuous rollout with order >= 1") {
  const Solved s = load("small_indefinite");
  const int steps = 4096;
  const CtSolution ct = solve_ct(s.sc.model, s.sc.weights, s.sc.horizon, {steps});
  RolloutOptions ro;
  ro.steps = steps;
  const ControlledTrajectory cref = rollout(s.sc.model, s.sc.weights, ct, s.Z0, ro);
  auto sup_distance = [&](int L) {
    const ControlledTrajectory tr = solve_dt(s, L);
    const int stride = steps / L;
    double worst = 0.0;
    for (Index j = 0; j < tr.samples(); ++j) {
      worst = std::max(worst, (tr.X.row(j) - cref.X.row(j * stride)).cwiseAbs().maxCoeff());
    }
    return worst;
  };
  const double d1 = sup_distance(256);
  const double d2 = sup_distance(512);
  const double d3 = sup_distance(1024);
  CHECK(std::log2(d1 / d2) >= 1.0);
  CHECK(std::log2(d2 / d3) >= 1.0);
}

TEST_CASE("scalar_dare: worked examples") {
  auto gb = [](double l, double d) {
    const double g = std::exp(-l * d);
    return std::pair{g, (1.0 - g) / l};
  };
  auto [g0, b0] = gb(3.0, 0.01);
  CHECK(scalar_dare(g0, b0, 0.0) == 0.0);
  const double S = scalar_dare(g0, b0, 16.0);
  CHECK(S == doctest::Approx(208.1).epsilon(1e-3));
  CHECK(std::abs(S - (16.0 + g0 * g0 * S / (1.0 + S * b0 * b0))) <= 1e-10 * S);

  const double expected[] = {2.913, 2.081, 2.008};
  const double deltas[] = {1e-1, 1e-2, 1e-3};
  double prev = 1e300;
  for (int i = 0; i < 3; ++i) {
    auto [g, b] = gb(3.0, deltas[i]);
    const double SD = scalar_dare(g, b, 16.0) * deltas[i];
    CHECK(SD == doctest::Approx(expected[i]).epsilon(1e-3));
    CHECK(SD < prev);
    prev = SD;
  }
  auto [g4, b4] = gb(3.0, 1e-4);
  CHECK(std::abs(scalar_dare(g4, b4, 16.0) * 1e-4 - 2.0) <= 0.01);

  CHECK_THROWS_AS(scalar_dare(1.0, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(scalar_dare(0.5, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(scalar_dare(0.5, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("property: DARE residual, value recursion and closed-loop stability") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double l = 0.01 + 10.0 * U(rng);
    const double Delta = std::pow(10.0, -4.0 + 4.0 * U(rng));
    const double q = std::pow(10.0, -3.0 + 5.0 * U(rng));
    const double g = std::exp(-l * Delta);
    const double b = -std::expm1(-l * Delta) / l;
    const double S = scalar_dare(g, b, q);
    CHECK(std::abs(S - (q + g * g * S / (1.0 + S * b * b))) <= 1e-10 * S);
    const double cl = g / (1.0 + S * b * b);
    CHECK(cl > 0.0);
    CHECK(cl < 1.0);
    CHECK(1.0 - g + b * b * S != 0.0);
  }
  // Value recursion from S = q converges when the closed loop contracts fast.
  for (int trial = 0; trial < 100; ++trial) {
    const double l = 0.5 + 5.0 * U(rng);
    const double Delta = 0.05 + 0.5 * U(rng);
    const double q = 0.5 + 20.0 * U(rng);
    const double g = std::exp(-l * Delta);
    const double b = -std::expm1(-l * Delta) / l;
    double S = q;
    for (int i = 0; i < 500; ++i) S = q + g * g * S / (1.0 + S * b * b);
    CHECK(S == doctest::Approx(scalar_dare(g, b, q)).epsilon(1e-9));
  }
}

TEST_CASE("dt_scalar_policy: steady state") {
  const DtScalarPolicy sat = dt_scalar_policy(3.0, 3.0, 10.0, 0.0, 16.0, 0.01);
  CHECK(sat.n == 0.0);
  CHECK(sat.z_inf == 0.0);
  CHECK(sat.x_inf == 10.0);

  const double x_ct = make_scalar_policy(3.0, 3.0, 10.0, -1.0, 16.0).x_inf;
  for (double Delta : {1e-1, 1e-2, 1e-3}) {
    const DtScalarPolicy p = dt_scalar_policy(3.0, 3.0, 10.0, -1.0, 16.0, Delta);
    CHECK(std::abs(p.x_inf - x_ct) <= 10.0 * Delta);
    CHECK(std::abs(p.step(p.z_inf) - p.z_inf) <= 1e-12);
    // Printed closed-loop recursion.
    for (double z : {-3.0, 0.5, 2.0}) {
      const double expected = p.g / (1.0 + p.S * p.b * p.b) * z +
                             (1.0 - p.g) / (1.0 - p.g + p.S * p.b * p.b) * p.n;
      CHECK(p.step(z) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(dt_scalar_policy(0.0, 1.0, 1.0, 0.0, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("small_delta_limits: first-order expansions") {
  CHECK(small_delta_limits(3.0, 3.0, 10.0, -1.0, 16.0, 0.0).expansion_x_inf == 10.0);
  const SmallDeltaLimits lim = small_delta_limits(3.0, 3.0, 10.0, -1.0, 16.0, 1e-3);
  CHECK(lim.expansion_x_inf == doctest::Approx(9.9994).epsilon(1e-12));
  CHECK(lim.S_Delta == doctest::Approx(2.0));
  CHECK(lim.ref_coeff == doctest::Approx(0.6));
  // The limiting law is the continuous infinite-horizon law.
  const ScalarPolicy ct = make_scalar_policy(3.0, 3.0, 10.0, -1.0, 16.0);
  for (double x : {0.0, 5.0, 10.0}) {
    const double law = -lim.gain * x + lim.ref_coeff * -1.0 + lim.N_coeff * 10.0;
    CHECK(law == doctest::Approx(control_law(ct, x)).epsilon(1e-12));
  }
}

// The discrete steady state converges to the fixed point of the limiting
// law, which is the continuous steady state, not the expansion x_inf -> N.
TEST_CASE("small_delta_limits: discrete steady state follows the limiting law") {
  const double deltas[] = {1e-2, 1e-3, 1e-4};
  for (double d : deltas) {
    const DtScalarPolicy p = dt_scalar_policy(3.0, 1.0, 10.0, -1.0, 16.0, d);
    const SmallDeltaLimits lim = small_delta_limits(3.0, 1.0, 10.0, -1.0, 16.0, d);
    CHECK(std::abs(p.x_inf - lim.law_x_inf) <= 10.0 * d);
  }
  const DtScalarPolicy p = dt_scalar_policy(3.0, 3.0, 10.0, -1.0, 16.0, 1e-4);
  const SmallDeltaLimits lim = small_delta_limits(3.0, 3.0, 10.0, -1.0, 16.0, 1e-4);
  CHECK(std::abs(p.x_inf - lim.expansion_x_inf) > 0.1);
}

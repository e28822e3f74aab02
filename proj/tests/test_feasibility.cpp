#include <cmath>
#include <random>

#include "doctest.h"
#include "dtnlqr/feasibility.hpp"
#include "support.hpp"

using namespace dtnlqr;
using test_support::vec;

namespace {

constexpr double kLambda0 = 2.7875e-4;

ModelSpec three_class(const Vec& ld, const Vec& lout) {
  ModelSpec m;
  m.lambda_s = Vec::Ones(3);
  m.lambda_d = ld;
  m.lambda_out = lout;
  m.N = Vec::Constant(3, 10.0);
  return m;
}

ModelSpec uniform_model() { return three_class(Vec::Ones(3) / std::sqrt(3.0), Vec::Ones(3)); }

ModelSpec nonuniform_model() {
  return three_class(vec({1.0, 3.0, 5.0}) / std::sqrt(35.0), vec({1.0, 2.0, 4.0}));
}

double min_eig(const Mat& R) {
  Eigen::SelfAdjointEigenSolver<Mat> es(R, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

// Smallest c4/c3 on a uniform scan where R is positive definite.
double scan_frontier(double r, const ModelSpec& m, double step, double upper) {
  CostWeights cw;
  cw.c1 = r;
  cw.c3 = 1.0;
  for (double s = 0.0; s <= upper; s += step) {
    cw.c4 = s;
    if (min_eig(build_R(cw, m)) > 0.0) return s;
  }
  return upper;
}

}  // namespace

TEST_CASE("build_R: identity and rank-one spectrum") {
  CostWeights cw;
  cw.c3 = 1.0;
  CHECK(build_R(cw, uniform_model()).isApprox(Mat::Identity(3, 3)));

  cw.c1 = 2.0;
  cw.c4 = 1.5;
  const Definiteness d = is_positive_definite(build_R(cw, uniform_model()));
  CHECK(d.eigenvalues[0] == doctest::Approx(0.5));
  CHECK(d.eigenvalues[1] == doctest::Approx(2.5));
  CHECK(d.eigenvalues[2] == doctest::Approx(2.5));
}

TEST_CASE("build_R: reference weights give an indefinite R") {
  ModelSpec m;
  m.lambda_s = Vec::Constant(3, kLambda0);
  m.lambda_d = Vec::Constant(3, kLambda0);
  m.N = vec({51.0, 50.0, 50.0});
  CostWeights cw;
  cw.c1 = 1.0 / (kLambda0 * kLambda0);
  cw.c3 = 1.0;
  cw.c4 = 0.05;
  const Mat R = build_R(cw, m);
  const Definiteness d = is_positive_definite(R);
  CHECK(d.eigenvalues[0] == doctest::Approx(1.0 - 3.0 + 0.05 * kLambda0 * kLambda0));
  CHECK_FALSE(d.is_pd);
  CHECK_FALSE(d.is_psd);
}

TEST_CASE("is_positive_definite: definiteness levels and symmetry check") {
  CHECK(is_positive_definite(Mat::Identity(2, 2)).is_pd);
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 1.0;
  const Definiteness d = is_positive_definite(D);
  CHECK(d.is_psd);
  CHECK_FALSE(d.is_pd);
  Mat A = Mat::Identity(2, 2);
  A(0, 1) = 0.5;
  CHECK_THROWS_AS(is_positive_definite(A), std::invalid_argument);
}

TEST_CASE("sufficient_c4_bound: worked examples") {
  CostWeights cw;
  cw.c1 = 1.0;
  cw.c3 = 1.0;
  CHECK(sufficient_c4_bound(cw, uniform_model()).direction_bound == doctest::Approx(0.0));

  const Vec ld = Vec::Ones(3) / std::sqrt(3.0);
  const ModelSpec tied = three_class(ld, ld);
  cw.c1 = 2.5;
  const C4Bound b = sufficient_c4_bound(cw, tied);
  CHECK(b.alpha == doctest::Approx(3.0));
  CHECK(b.alpha_bound == doctest::Approx(3.0 * 1.5));
  CHECK(b.direction_bound == doctest::Approx(b.alpha_bound));

  cw.c1 = 2.0;
  cw.c3 = 1.0;
  CHECK(sufficient_c4_bound(cw, uniform_model()).direction_bound == doctest::Approx(1.0));
}

TEST_CASE("sufficient_c4_bound: alpha form equals the direction form when Lout = diag(Ld)") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec ld = Vec::NullaryExpr(3, [&] { return U(rng); });
    ld.normalize();
    CostWeights cw;
    cw.c1 = 3.0 * U(rng);
    cw.c3 = U(rng);
    const C4Bound b = sufficient_c4_bound(cw, three_class(ld, ld));
    CHECK(b.direction_bound == doctest::Approx(b.alpha_bound).epsilon(1e-12));
  }
}

TEST_CASE("min_c4_ratio: worked examples") {
  CHECK(min_c4_ratio(0.5, uniform_model()) == 0.0);
  CHECK(min_c4_ratio(2.0, uniform_model()) == doctest::Approx(1.0).epsilon(1e-8));
  const double r = min_c4_ratio(2.0, nonuniform_model());
  CHECK(std::abs(r - scan_frontier(2.0, nonuniform_model(), 1e-4, 1.0)) <= 1e-4);
}

TEST_CASE("min_c4_ratio: uniform frontier is max(0, c1/c3 - 1)") {
  for (double r = 0.0; r <= 5.0 + 1e-12; r += 0.05) {
    CHECK(std::abs(min_c4_ratio(r, uniform_model()) - std::max(0.0, r - 1.0)) <= 1e-8);
  }
}

TEST_CASE("min_c4_ratio: negative ratio rejected") {
  CHECK_THROWS_AS(min_c4_ratio(-1.0, uniform_model()), std::invalid_argument);
}

TEST_CASE("property: build_R is exactly symmetric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.01, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelSpec m = three_class(Vec::NullaryExpr(3, [&] { return U(rng); }),
                                    Vec::NullaryExpr(3, [&] { return U(rng); }));
    CostWeights cw;
    cw.c1 = U(rng);
    cw.c3 = U(rng);
    cw.c4 = U(rng);
    const Mat R = build_R(cw, m);
    CHECK(R == R.transpose());
  }
}

TEST_CASE("property: frontier is nondecreasing in c1/c3") {
  for (const ModelSpec& m : {uniform_model(), nonuniform_model()}) {
    double prev = 0.0;
    for (double r = 0.0; r <= 5.0 + 1e-12; r += 0.1) {
      const double v = min_c4_ratio(r, m);
      CHECK(v >= prev - 1e-9);
      prev = v;
    }
  }
}

// The direction bound only tests R along Ld, so it can never exceed the true
// frontier; it equals the frontier when Ld is an eigenvector of Lout^2.
TEST_CASE("property: direction bound is a lower bound on the frontier") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec ld = Vec::NullaryExpr(3, [&] { return U(rng); });
    ld.normalize();
    const ModelSpec m = three_class(ld, Vec::NullaryExpr(3, [&] { return U(rng); }));
    CostWeights cw;
    cw.c1 = 1.0 + 4.0 * U(rng) / 3.0;
    cw.c3 = 1.0;
    const double bound = sufficient_c4_bound(cw, m).direction_bound;
    CHECK(bound <= min_c4_ratio(cw.c1, m) + 1e-8);
  }
}

TEST_CASE("direction bound is tight when Lout is a multiple of the identity") {
  for (double r : {1.5, 2.0, 3.7}) {
    const Vec ld = vec({1.0, 3.0, 5.0}) / std::sqrt(35.0);
    const ModelSpec m = three_class(ld, Vec::Constant(3, 2.0));
    CostWeights cw;
    cw.c1 = r;
    cw.c3 = 1.0;
    CHECK(sufficient_c4_bound(cw, m).direction_bound ==
          doctest::Approx(min_c4_ratio(r, m)).epsilon(1e-8));
  }
}

TEST_CASE("counterexample: the direction bound is not sufficient for non-uniform outflow") {
  CostWeights cw;
  cw.c1 = 2.0;
  cw.c3 = 1.0;
  const ModelSpec m = nonuniform_model();
  const double bound = sufficient_c4_bound(cw, m).direction_bound;
  const double frontier = min_c4_ratio(2.0, m);
  CHECK(bound == doctest::Approx(0.080092).epsilon(1e-4));
  CHECK(frontier == doctest::Approx(0.093271).epsilon(1e-4));
  // Just above the bound R is still indefinite.
  cw.c4 = 0.5 * (bound + frontier);
  CHECK(min_eig(build_R(cw, m)) < 0.0);
}

TEST_CASE("analyze_feasibility: report fields") {
  CostWeights cw;
  cw.c1 = 2.0;
  cw.c3 = 1.0;
  cw.c4 = 1.5;
  const FeasibilityReport rep = analyze_feasibility(cw, uniform_model());
  CHECK(rep.definiteness.is_pd);
  REQUIRE(rep.min_c4_ratio.has_value());
  CHECK(*rep.min_c4_ratio == doctest::Approx(1.0));
  for (Index i = 1; i < 3; ++i) {
    CHECK(rep.definiteness.eigenvalues[i] >= rep.definiteness.eigenvalues[i - 1]);
  }
  cw.c3 = 0.0;
  CHECK_FALSE(analyze_feasibility(cw, uniform_model()).min_c4_ratio.has_value());
}

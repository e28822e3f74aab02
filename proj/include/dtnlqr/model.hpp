#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "dtnlqr/common.hpp"

namespace dtnlqr {

/// Two-hop relay population: K classes with source/destination contact
/// intensities (1/s) and relay counts. lambda_s is the diagonal of Lambda_in;
/// lambda_d is the vector Lambda_d and, unless lambda_out is given, also the
/// diagonal of Lambda_out.
struct ModelSpec {
  Vec lambda_s;
  Vec lambda_d;
  Vec N;
  Vec lambda_out;  // optional override of the outflow rates
  int source_class = 0;
  int dest_class = 0;

  Index classes() const { return N.size(); }
  const Vec& outflow() const { return lambda_out.size() ? lambda_out : lambda_d; }

  /// Throws DimensionError / std::invalid_argument when the invariants
  /// (K >= 1, all intensities and populations strictly positive) fail.
  void validate() const;
};

/// Cost weights with c2 normalized to one.
struct CostWeights {
  double c1 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  Vec u_bar;  // reference control, componentwise <= 0
  Vec q;      // per-class running weights (infinite-horizon solvers)
  Mat Q;      // 2K x 2K running weight for the discrete solver; empty = 0

  /// u_bar padded to K zeros when it was left empty.
  Vec reference(Index K) const;
  /// Q, or the 2K x 2K zero matrix when empty.
  Mat running(Index K) const;

  void validate(Index K) const;
};

/// Z = (X, Xhat) where Xhat integrates X over time.
struct AugmentedState {
  Vec X;
  Vec Xhat;

  static AugmentedState zero(Index K) { return {Vec::Zero(K), Vec::Zero(K)}; }
  static AugmentedState from_stacked(const Vec& Z);
  Vec stacked() const;
};

enum class ViolationKind { XNegative, XAboveN, UPositive, TimerNegative };

std::string_view to_string(ViolationKind kind);

struct Violation {
  double t = 0.0;
  Index cls = 0;
  ViolationKind kind = ViolationKind::XNegative;
  double value = 0.0;  // offending X, u or implied timer rate
};

/// Sampled trajectory of a controlled run. Per-time arrays are stored with
/// one row per sample time and one column per class.
struct ControlledTrajectory {
  std::vector<double> t;
  Mat X;
  Mat Xhat;
  Mat u;
  Mat w;
  Vec D;
  double cost = 0.0;
  std::vector<Violation> violations;

  Index samples() const { return static_cast<Index>(t.size()); }
  Index classes() const { return X.cols(); }
};

/// dZ/dt = A Z + B w + c with A = [[-Lout, 0], [I, 0]], B = [I; 0] and
/// c = [Lin N + u_bar; 0].
AugmentedState drift(const AugmentedState& Z, const Vec& w, const ModelSpec& m,
                     const CostWeights& cw);

/// Lower bound D = 1 - exp(-lambda_d . Xhat) on the delivery probability.
/// Rejects negative Xhat.
double delivery_lower_bound(const Vec& Xhat, const Vec& lambda_d);

/// Same functional without the sign check, used when reporting trajectories
/// that already violate X >= 0.
double delivery_functional(const Vec& Xhat, const Vec& lambda_d);

struct TimerRates {
  Vec M;                       // per-class total rate, u = -M X
  Vec M_bar;                   // discard rate M - lambda_s + lambda_out
  std::vector<Index> negative;  // classes with M_bar < 0 before clamping
};

struct TimerOptions {
  bool clamp_negative = false;
  double tol = 0.0;
};

/// Inverts u = -M X at the mean. X_i = 0 with u_i < 0 throws
/// InfeasibleControlError; negative M_bar is flagged, and zeroed only when
/// clamping is requested.
TimerRates timer_rates_from_control(const Vec& u, const Vec& X, const ModelSpec& m,
                                    const TimerOptions& opts = {});

/// Every grid point where X < -tol, X > N + tol, u > tol or the implied
/// discard rate is below -tol.
std::vector<Violation> check_constraints(const ControlledTrajectory& traj,
                                         const ModelSpec& m, double tol = 1e-9);

/// Trapezoidal integral of w'w plus Xhat(tau)' R Xhat(tau).
double evaluate_cost(const ControlledTrajectory& traj, const Mat& R);

}  // namespace dtnlqr

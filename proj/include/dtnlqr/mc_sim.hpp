#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dtnlqr/common.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

struct SimConfig {
  int runs = 1;
  std::uint64_t base_seed = 0;
  double rate_grid = 0.0;  // step of the piecewise-constant rate schedule (s)
  double horizon = 0.0;
  bool clamp_negative_timer = false;
  int threads = 1;  // 0 = hardware concurrency

  void validate() const;
};

/// Discard rates M_bar per class, constant on [j h, (j+1) h).
struct TimerSchedule {
  double step = 0.0;
  std::vector<Vec> M_bar;
  std::vector<std::size_t> clamped;  // steps whose rates were clamped to 0

  std::size_t steps() const { return M_bar.size(); }
};

/// The timer rates of some grid steps cannot be realized.
class InfeasibleScheduleError : public InfeasibleControlError {
 public:
  InfeasibleScheduleError(const std::string& what, std::vector<std::size_t> steps)
      : InfeasibleControlError(what), steps_(std::move(steps)) {}
  const std::vector<std::size_t>& steps() const { return steps_; }

 private:
  std::vector<std::size_t> steps_;
};

/// M_bar = 0 on every step: relays keep their copies.
TimerSchedule uncontrolled_schedule(const ModelSpec& m, const SimConfig& cfg);

/// Rates that realize the mean control u = -M X of `traj`, evaluated at the
/// midpoint of each step by linear interpolation. Steps with negative rates,
/// negative mean X, or u < 0 at X = 0 throw InfeasibleScheduleError listing
/// every offending step, unless cfg.clamp_negative_timer is set.
TimerSchedule timer_schedule(const ModelSpec& m, const ControlledTrajectory& traj,
                             const SimConfig& cfg);

struct SimPath {
  std::vector<double> t;  // grid j h, j = 0..steps
  Mat xi;                 // copies per class at grid times
  std::vector<double> H;  // cumulative delivery hazard at grid times
  double T_d = std::numeric_limits<double>::infinity();
  std::size_t events = 0;
};

/// One realization of the relay contact process. Susceptible class-i relays
/// are infected at rate lambda_s_i each, carriers discard at rate M_bar_i each
/// and return to the susceptible pool. Delivery is the first point of a
/// Poisson process with intensity sum_i lambda_d_i xi_i and does not affect
/// the relays. Seeded from (cfg.base_seed, run_index) only.
SimPath simulate_once(const ModelSpec& m, const TimerSchedule& sched, const SimConfig& cfg,
                      std::uint64_t run_index);

struct SimEnsemble {
  std::vector<double> t;
  int runs = 0;
  Mat mean_xi;
  Mat se_xi;
  Vec mean_psi;  // mean of 1 - exp(-H(t))
  Vec se_psi;
  Vec cdf_Td;    // fraction of runs with T_d <= t
  Vec se_cdf;
  Mat ode_X;     // mean-field solution under the same rates
};

/// Aggregates cfg.runs paths. Runs are reduced in fixed blocks in index
/// order, so the result does not depend on the thread count.
SimEnsemble monte_carlo(const ModelSpec& m, const TimerSchedule& sched, const SimConfig& cfg);

/// Exact per-step solution of dX/dt = Lin (N - X) - M_bar X from X = 0.
Mat mean_field_X(const ModelSpec& m, const TimerSchedule& sched);

/// D = 1 - exp(-lambda_d . int X) for the same mean-field solution, with the
/// integral of X taken exactly on each step.
Vec mean_field_D(const ModelSpec& m, const TimerSchedule& sched);

struct JensenRow {
  double t = 0.0;
  double mean_psi = 0.0;
  double D = 0.0;
  double diff = 0.0;  // mean_psi - D
  double se = 0.0;
  int flag = 0;       // +1 / -1 when |diff| > 3 se, by sign
};

/// Compares the ensemble mean of Psi with D on the ensemble grid. Throws
/// DimensionError if the grids differ in length or in any time.
std::vector<JensenRow> jensen_report(const SimEnsemble& ens, const std::vector<double>& t,
                                     const Vec& D);

}  // namespace dtnlqr

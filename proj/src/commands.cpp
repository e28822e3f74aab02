#include "dtnlqr/commands.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dtnlqr/csv.hpp"
#include "dtnlqr/ct_lqr.hpp"
#include "dtnlqr/detail/numerics.hpp"
#include "dtnlqr/dt_lqr.hpp"
#include "dtnlqr/feasibility.hpp"
#include "dtnlqr/inf_lqr.hpp"
#include "dtnlqr/mc_sim.hpp"
#include "dtnlqr/scenario.hpp"

namespace dtnlqr {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Options {
  std::string scenario;
  std::string out;
  std::string sweep;
  bool uncontrolled = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> threads;
  std::optional<double> delta;
};

struct Context {
  Scenario sc;
  fs::path out_dir;
  std::string prefix;
  std::ostream& out;
  std::ostream& err;

  fs::path file(const std::string& suffix) const { return out_dir / (prefix + suffix); }
};

// Early exit carrying a specific code; the message goes to stderr.
struct CommandExit {
  int code;
  std::string message;
};

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

struct SweepRange {
  double lo, hi, step;
  std::vector<double> values() const {
    std::vector<double> v;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) v.push_back(lo + static_cast<double>(i) * step);
    return v;
  }
};

SweepRange parse_range(const std::string& text) {
  SweepRange r{};
  char c1 = 0, c2 = 0;
  std::istringstream ss(text);
  if (!(ss >> r.lo >> c1 >> r.hi >> c2 >> r.step) || c1 != ':' || c2 != ':' || !ss.eof() ||
      !(r.step > 0.0) || r.hi < r.lo) {
    throw CommandExit{kExitUsage, "--sweep expects lo:hi:step with step > 0 and hi >= lo"};
  }
  return r;
}

Vec initial_state(const Scenario& sc) {
  const Index K = sc.model.classes();
  Vec Z0 = Vec::Zero(2 * K);
  Z0.head(K) = sc.X0;
  return Z0;
}

CsvTable trajectory_table(const ControlledTrajectory& tr) {
  const Index K = tr.classes();
  CsvTable t;
  t.header.push_back("t");
  for (const char* base : {"X_", "Xhat_", "u_"}) {
    for (Index i = 1; i <= K; ++i) t.header.push_back(base + std::to_string(i));
  }
  t.header.push_back("D");
  for (Index j = 0; j < tr.samples(); ++j) {
    std::vector<double> row{tr.t[static_cast<std::size_t>(j)]};
    for (Index i = 0; i < K; ++i) row.push_back(tr.X(j, i));
    for (Index i = 0; i < K; ++i) row.push_back(tr.Xhat(j, i));
    for (Index i = 0; i < K; ++i) row.push_back(tr.u(j, i));
    row.push_back(tr.D[j]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

ordered_json violation_summary(const std::vector<Violation>& v) {
  ordered_json kinds = ordered_json::object();
  for (auto k : {ViolationKind::XNegative, ViolationKind::XAboveN, ViolationKind::UPositive,
                 ViolationKind::TimerNegative}) {
    kinds[std::string(to_string(k))] = 0;
  }
  for (const auto& x : v) kinds[std::string(to_string(x.kind))] = kinds[std::string(to_string(x.kind))].get<int>() + 1;
  return kinds;
}

ordered_json terminal_summary(const ControlledTrajectory& tr) {
  const Index last = tr.samples() - 1;
  ordered_json j;
  j["D_tau"] = tr.D[last];
  j["X_tau"] = to_vector(tr.X.row(last).transpose());
  j["u_tau"] = to_vector(tr.u.row(last).transpose());
  return j;
}

void write_json(const fs::path& p, const ordered_json& j) { write_atomic(p, j.dump(2) + "\n"); }

std::string verdict(const Definiteness& d) {
  if (d.is_pd) return "positive-definite";
  if (d.is_psd) return "positive-semidefinite";
  return "indefinite";
}

// --- feasibility --------------------------------------------------------

int cmd_feasibility(Context& cx, const Options& o) {
  const Scenario& sc = cx.sc;
  const FeasibilityReport rep = analyze_feasibility(sc.weights, sc.model);
  ordered_json j;
  j["command"] = "feasibility";
  j["scenario"] = cx.prefix;
  j["R_eigenvalues"] = to_vector(rep.definiteness.eigenvalues);
  j["verdict"] = verdict(rep.definiteness);
  j["direction_bound"] = rep.bound.direction_bound;
  j["alpha"] = rep.bound.alpha;
  j["alpha_bound"] = rep.bound.alpha_bound;
  j["min_c4_over_c3"] = rep.min_c4_ratio ? ordered_json(*rep.min_c4_ratio) : ordered_json(nullptr);

  cx.out << "R eigenvalues:";
  for (Index i = 0; i < rep.definiteness.eigenvalues.size(); ++i) {
    cx.out << ' ' << format_double(rep.definiteness.eigenvalues[i]);
  }
  cx.out << "\nverdict: " << verdict(rep.definiteness) << "\n";
  cx.out << "direction bound on c4: " << format_double(rep.bound.direction_bound) << "\n";
  if (rep.min_c4_ratio) cx.out << "min c4/c3: " << format_double(*rep.min_c4_ratio) << "\n";

  if (!o.sweep.empty()) {
    const SweepRange r = parse_range(o.sweep);
    CsvTable t;
    t.header = {"c1_over_c3", "min_c4_over_c3", "sufficient_bound"};
    for (double ratio : r.values()) {
      CostWeights cw;
      cw.c1 = ratio;
      cw.c3 = 1.0;
      const double bound = sufficient_c4_bound(cw, sc.model).direction_bound;
      t.rows.push_back({ratio, min_c4_ratio(ratio, sc.model), bound});
    }
    write_atomic(cx.file("_frontier.csv"), to_csv(t));
    j["frontier_csv"] = (cx.prefix + "_frontier.csv");
    j["frontier_points"] = t.rows.size();
  }
  write_json(cx.file("_feasibility.json"), j);
  return kExitOk;
}

// --- continuous finite horizon -----------------------------------------

[[noreturn]] void blow_up_exit(Context& cx, const char* mode, const BlowUp& b,
                               ordered_json summary) {
  summary["blow_up"] = true;
  summary["escape_time"] = b.time;
  summary["escape_norm"] = b.norm;
  write_json(cx.file(std::string("_") + mode + "_summary.json"), summary);
  throw CommandExit{kExitBlowUp, "Riccati solution escapes at t = " + format_double(b.time) +
                                     " (max |P| = " + format_double(b.norm) + ")"};
}

int cmd_solve_ct(Context& cx) {
  const Scenario& sc = cx.sc;
  const int steps = sc.grids.ode_steps(sc.horizon);
  RiccatiOptions ro;
  ro.steps = steps;
  const CtSolution sol = solve_ct(sc.model, sc.weights, sc.horizon, ro);
  ordered_json j;
  j["command"] = "solve-ct";
  j["scenario"] = cx.prefix;
  j["horizon"] = sc.horizon;
  j["steps"] = steps;
  j["R_eigenvalues"] = to_vector(is_positive_definite(sol.R).eigenvalues);
  if (sol.blow_up) blow_up_exit(cx, "ct", *sol.blow_up, j);

  RolloutOptions opts;
  opts.steps = steps;
  const Vec Z0 = initial_state(sc);
  const ControlledTrajectory tr = rollout(sc.model, sc.weights, sol, Z0, opts);
  const double predicted = sol.predicted_cost(Z0);
  j["blow_up"] = false;
  j["escape_time"] = nullptr;
  j["cost"] = tr.cost;
  j["predicted_cost"] = predicted;
  j["min_J_residual"] = std::abs(tr.cost - predicted) / std::max(std::abs(tr.cost), 1e-300);
  j["min_eig_P0"] = sol.min_eig_P0();
  j["violations"] = tr.violations.size();
  j["violation_kinds"] = violation_summary(tr.violations);
  j.update(terminal_summary(tr));
  j["u_bar"] = to_vector(sc.weights.reference(sc.model.classes()));

  write_atomic(cx.file("_ct.csv"), to_csv(trajectory_table(tr)));
  write_json(cx.file("_ct_summary.json"), j);
  cx.out << "cost " << format_double(tr.cost) << ", D(tau) " << format_double(tr.D[tr.samples() - 1])
         << ", violations " << tr.violations.size() << "\n";
  return kExitOk;
}

// --- discrete finite horizon ---------------------------------------------

int cmd_solve_dt(Context& cx, const Options& o) {
  const Scenario& sc = cx.sc;
  const Index K = sc.model.classes();
  const double requested = o.delta.value_or(sc.grids.Delta);
  if (!(requested > 0.0) || requested > sc.horizon) {
    throw CommandExit{kExitUsage, "--delta must lie in (0, horizon]"};
  }
  const int L = static_cast<int>(std::max(1.0, std::round(sc.horizon / requested)));
  const double Delta = sc.horizon / L;
  const DiscreteSystem ds = exact_discretize(sc.model, sc.weights, Delta);
  const Mat R = build_R(sc.weights, sc.model);
  const Mat Q = sc.weights.running(K);
  Mat Q_f = Mat::Zero(2 * K, 2 * K);
  Q_f.bottomRightCorner(K, K) = R;
  // Stage cost weighted by Delta so the sum samples the continuous integral.
  const DiscretePolicy pol = finite_horizon_policy(ds, Q, Q_f, L, Delta);

  ordered_json j;
  j["command"] = "solve-dt";
  j["scenario"] = cx.prefix;
  j["horizon"] = sc.horizon;
  j["Delta"] = Delta;
  j["steps"] = L;
  j["stage_weight"] = Delta;
  if (pol.indefinite) {
    j["blow_up"] = true;
    write_json(cx.file("_dt_summary.json"), j);
    throw CommandExit{kExitBlowUp, "discrete Riccati recursion lost positivity of Delta I + B'SB"};
  }
  const Vec Z0 = initial_state(sc);
  const ControlledTrajectory tr = dt_rollout(sc.model, ds, pol, Q, Q_f, Z0, 1e-9, Delta);
  const double predicted = pol.predicted_cost(Z0);
  j["blow_up"] = false;
  j["cost"] = tr.cost;
  j["predicted_cost"] = predicted;
  j["min_J_residual"] = std::abs(tr.cost - predicted) / std::max(std::abs(tr.cost), 1e-300);
  j["violations"] = tr.violations.size();
  j["violation_kinds"] = violation_summary(tr.violations);
  j.update(terminal_summary(tr));

  // Continuous reference on the scenario's ODE grid.
  RiccatiOptions ro;
  ro.steps = sc.grids.ode_steps(sc.horizon);
  const CtSolution ct = solve_ct(sc.model, sc.weights, sc.horizon, ro);
  if (ct.blow_up) {
    j["ct_cost"] = nullptr;
    j["ct_cost_rel_diff"] = nullptr;
  } else {
    const double ct_cost = ct.predicted_cost(Z0);
    j["ct_cost"] = ct_cost;
    j["ct_cost_rel_diff"] = std::abs(tr.cost - ct_cost) / std::max(std::abs(ct_cost), 1e-300);
  }

  write_atomic(cx.file("_dt.csv"), to_csv(trajectory_table(tr)));
  write_json(cx.file("_dt_summary.json"), j);
  cx.out << "cost " << format_double(tr.cost) << ", D(tau) " << format_double(tr.D[tr.samples() - 1])
         << ", violations " << tr.violations.size() << "\n";
  return kExitOk;
}

// --- infinite horizon -----------------------------------------------------

Vec require_q(const Scenario& sc) {
  if (sc.weights.q.size() == 0) {
    throw ScenarioSchemaError({"weights.q: required field missing for infinite-horizon modes"});
  }
  return sc.weights.q;
}

ControlledTrajectory empty_trajectory(Index n, Index K) {
  ControlledTrajectory tr;
  tr.t.resize(static_cast<std::size_t>(n));
  tr.X.resize(n, K);
  tr.Xhat.resize(n, K);
  tr.u.resize(n, K);
  tr.w.resize(n, K);
  tr.D.resize(n);
  return tr;
}

ordered_json bounds_json(const BoundsReport& b) {
  ordered_json j;
  j["x_positive"] = b.x_positive;
  j["x_below_N"] = b.x_below_N;
  j["u_above_ref"] = b.u_above_ref;
  j["u_negative"] = b.u_negative;
  j["verdict"] = std::string(to_string(b.verdict));
  return j;
}

int cmd_solve_inf(Context& cx) {
  const Scenario& sc = cx.sc;
  require_q(sc);
  const Index K = sc.model.classes();
  const std::vector<ScalarPolicy> pols = solve_infinite_horizon(sc.model, sc.weights);
  const int steps = sc.grids.ode_steps(sc.horizon);
  const double h = sc.horizon / steps;
  ControlledTrajectory tr = empty_trajectory(steps + 1, K);
  for (Index j = 0; j <= steps; ++j) {
    const double t = j == steps ? sc.horizon : static_cast<double>(j) * h;
    tr.t[static_cast<std::size_t>(j)] = t;
    for (Index i = 0; i < K; ++i) {
      const ScalarPolicy& p = pols[static_cast<std::size_t>(i)];
      const double d0 = sc.X0[i] - p.x_inf;
      const double x = p.x_inf + d0 * std::exp(-p.sigma * t);
      tr.X(j, i) = x;
      tr.Xhat(j, i) = p.x_inf * t + d0 * t * detail::phi1(p.sigma * t);
      tr.u(j, i) = control_law(p, x);
      tr.w(j, i) = tr.u(j, i) - p.u_bar;
    }
    tr.D[j] = delivery_functional(tr.Xhat.row(j).transpose(), sc.model.lambda_d);
  }
  tr.violations = check_constraints(tr, sc.model);

  ordered_json j;
  j["command"] = "solve-inf";
  j["scenario"] = cx.prefix;
  ordered_json classes = ordered_json::array();
  for (const auto& p : pols) {
    ordered_json c;
    c["lambda"] = p.lambda;
    c["mu"] = p.mu;
    c["N"] = p.N;
    c["u_bar"] = p.u_bar;
    c["q"] = p.q;
    c["p"] = p.p;
    c["k"] = p.k_off;
    c["sigma"] = p.sigma;
    c["alpha"] = p.alpha ? ordered_json(*p.alpha) : ordered_json(nullptr);
    c["x_inf"] = p.x_inf;
    c["u_inf"] = p.u_inf;
    c["bounds"] = bounds_json(bounds_check(p));
    classes.push_back(c);
  }
  j["classes"] = classes;
  j["violations"] = tr.violations.size();
  j.update(terminal_summary(tr));
  write_atomic(cx.file("_inf.csv"), to_csv(trajectory_table(tr)));
  write_json(cx.file("_inf_summary.json"), j);
  for (std::size_t i = 0; i < pols.size(); ++i) {
    cx.out << "class " << i + 1 << ": x_inf " << format_double(pols[i].x_inf) << ", u_inf "
           << format_double(pols[i].u_inf) << ", " << to_string(bounds_check(pols[i]).verdict)
           << "\n";
  }
  return kExitOk;
}

int cmd_solve_dt_inf(Context& cx, const Options& o) {
  const Scenario& sc = cx.sc;
  const Vec q = require_q(sc);
  sc.model.validate();
  const Index K = sc.model.classes();
  const double requested = o.delta.value_or(sc.grids.Delta);
  if (!(requested > 0.0) || requested > sc.horizon) {
    throw CommandExit{kExitUsage, "--delta must lie in (0, horizon]"};
  }
  const int L = static_cast<int>(std::max(1.0, std::round(sc.horizon / requested)));
  const double Delta = sc.horizon / L;
  const Vec ub = sc.weights.reference(K);
  std::vector<DtScalarPolicy> pols;
  for (Index i = 0; i < K; ++i) {
    pols.push_back(dt_scalar_policy(sc.model.outflow()[i], sc.model.lambda_s[i], sc.model.N[i],
                                    ub[i], q[i], Delta));
  }
  ControlledTrajectory tr = empty_trajectory(L + 1, K);
  Vec z(K), xhat = Vec::Zero(K);
  for (Index i = 0; i < K; ++i) z[i] = sc.X0[i] - sc.model.N[i];
  for (Index l = 0; l <= L; ++l) {
    tr.t[static_cast<std::size_t>(l)] = static_cast<double>(l) * Delta;
    for (Index i = 0; i < K; ++i) {
      const DtScalarPolicy& p = pols[static_cast<std::size_t>(i)];
      const double w = p.control(z[i]);
      tr.X(l, i) = z[i] + p.N;
      tr.Xhat(l, i) = xhat[i];
      tr.w(l, i) = w;
      tr.u(l, i) = w + p.u_bar;
    }
    tr.D[l] = delivery_functional(xhat, sc.model.lambda_d);
    for (Index i = 0; i < K; ++i) {
      const DtScalarPolicy& p = pols[static_cast<std::size_t>(i)];
      const double v = tr.u(l, i) + p.mu * p.N;
      xhat[i] += p.b * tr.X(l, i) + Delta * Delta * detail::phi2(p.lambda * Delta) * v;
      z[i] = p.step(z[i]);
    }
  }
  tr.violations = check_constraints(tr, sc.model);

  ordered_json j;
  j["command"] = "solve-dt-inf";
  j["scenario"] = cx.prefix;
  j["Delta"] = Delta;
  ordered_json classes = ordered_json::array();
  for (const auto& p : pols) {
    const SmallDeltaLimits lim = small_delta_limits(p.lambda, p.mu, p.N, p.u_bar, p.q, Delta);
    ScalarPolicy shadow;
    shadow.N = p.N;
    shadow.u_bar = p.u_bar;
    shadow.x_inf = p.x_inf;
    shadow.u_inf = p.u_inf;
    ordered_json c;
    c["lambda"] = p.lambda;
    c["mu"] = p.mu;
    c["N"] = p.N;
    c["u_bar"] = p.u_bar;
    c["q"] = p.q;
    c["g"] = p.g;
    c["b"] = p.b;
    c["n"] = p.n;
    c["S"] = p.S;
    c["S_Delta"] = p.S * Delta;
    c["feedback_gain"] = p.feedback_gain;
    c["feedforward_gain"] = p.feedforward_gain;
    c["closed_loop"] = p.closed_loop;
    c["x_inf"] = p.x_inf;
    c["u_inf"] = p.u_inf;
    c["limit_S_Delta"] = lim.S_Delta;
    c["expansion_x_inf"] = lim.expansion_x_inf;
    c["law_x_inf"] = lim.law_x_inf;
    c["bounds"] = bounds_json(bounds_check(shadow));
    classes.push_back(c);
  }
  j["classes"] = classes;
  j["violations"] = tr.violations.size();
  j.update(terminal_summary(tr));
  write_atomic(cx.file("_dt_inf.csv"), to_csv(trajectory_table(tr)));
  write_json(cx.file("_dt_inf_summary.json"), j);
  for (std::size_t i = 0; i < pols.size(); ++i) {
    cx.out << "class " << i + 1 << ": x_inf " << format_double(pols[i].x_inf) << ", u_inf "
           << format_double(pols[i].u_inf) << "\n";
  }
  return kExitOk;
}

// --- simulation ------------------------------------------------------------

int cmd_simulate(Context& cx, const Options& o) {
  const Scenario& sc = cx.sc;
  const Index K = sc.model.classes();
  SimConfig cfg = sc.sim;
  if (o.runs) cfg.runs = *o.runs;
  if (o.seed) cfg.base_seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;

  ordered_json j;
  j["command"] = "simulate";
  j["scenario"] = cx.prefix;
  j["runs"] = cfg.runs;
  j["seed"] = cfg.base_seed;
  j["uncontrolled"] = o.uncontrolled;

  TimerSchedule sched;
  if (o.uncontrolled) {
    sched = uncontrolled_schedule(sc.model, cfg);
  } else {
    RiccatiOptions ro;
    ro.steps = sc.grids.ode_steps(sc.horizon);
    const CtSolution sol = solve_ct(sc.model, sc.weights, sc.horizon, ro);
    if (sol.blow_up) blow_up_exit(cx, "sim", *sol.blow_up, j);
    RolloutOptions opts;
    opts.steps = ro.steps;
    const ControlledTrajectory tr = rollout(sc.model, sc.weights, sol, initial_state(sc), opts);
    try {
      sched = timer_schedule(sc.model, tr, cfg);
    } catch (const InfeasibleScheduleError& e) {
      j["infeasible_steps"] = e.steps();
      write_json(cx.file("_sim_summary.json"), j);
      std::string list;
      for (std::size_t i = 0; i < e.steps().size() && i < 20; ++i) {
        list += (i ? "," : "") + std::to_string(e.steps()[i]);
      }
      if (e.steps().size() > 20) list += ",...";
      throw CommandExit{kExitInfeasibleTimers,
                        std::string(e.what()) + "; offending steps: " + list};
    }
  }
  j["clamped_steps"] = sched.clamped;

  const SimEnsemble ens = monte_carlo(sc.model, sched, cfg);
  const Vec D = mean_field_D(sc.model, sched);
  const std::vector<JensenRow> rows = jensen_report(ens, ens.t, D);

  CsvTable t;
  t.header.push_back("t");
  for (const char* base : {"meanxi_", "se_", "ode_X_"}) {
    for (Index i = 1; i <= K; ++i) t.header.push_back(base + std::to_string(i));
  }
  t.header.insert(t.header.end(), {"mean_psi", "D", "cdf_Td"});
  double worst_mean = 0.0;
  for (std::size_t r = 0; r < ens.t.size(); ++r) {
    const auto ri = static_cast<Index>(r);
    std::vector<double> row{ens.t[r]};
    for (Index i = 0; i < K; ++i) row.push_back(ens.mean_xi(ri, i));
    for (Index i = 0; i < K; ++i) row.push_back(ens.se_xi(ri, i));
    for (Index i = 0; i < K; ++i) {
      row.push_back(ens.ode_X(ri, i));
      if (ens.se_xi(ri, i) > 0.0) {
        worst_mean = std::max(worst_mean,
                              std::abs(ens.mean_xi(ri, i) - ens.ode_X(ri, i)) / ens.se_xi(ri, i));
      }
    }
    row.insert(row.end(), {ens.mean_psi[ri], D[ri], ens.cdf_Td[ri]});
    t.rows.push_back(std::move(row));
  }

  ordered_json jr = ordered_json::array();
  int flagged_above = 0, flagged_below = 0;
  for (const auto& r : rows) {
    if (r.flag > 0) ++flagged_above;
    if (r.flag < 0) ++flagged_below;
    jr.push_back({r.t, r.mean_psi, r.D, r.diff, r.se, r.flag});
  }
  j["max_mean_deviation_in_se"] = worst_mean;
  ordered_json jensen;
  jensen["columns"] = {"t", "mean_psi", "D", "diff", "se", "flag"};
  jensen["flagged_above"] = flagged_above;
  jensen["flagged_below"] = flagged_below;
  jensen["rows"] = jr;
  j["jensen"] = jensen;

  write_atomic(cx.file("_sim.csv"), to_csv(t));
  write_json(cx.file("_sim_summary.json"), j);
  cx.out << "runs " << cfg.runs << ", max |mean - ode| / se " << format_double(worst_mean)
         << ", Jensen flags above " << flagged_above << " below " << flagged_below << "\n";
  return kExitOk;
}

// --- c4 sweep --------------------------------------------------------------

int cmd_sweep(Context& cx, const Options& o) {
  const Scenario& sc = cx.sc;
  const Index K = sc.model.classes();
  if (o.sweep.empty()) throw CommandExit{kExitUsage, "sweep needs --sweep lo:hi:step over c4"};
  const SweepRange r = parse_range(o.sweep);
  RiccatiOptions ro;
  ro.steps = sc.grids.ode_steps(sc.horizon);
  RolloutOptions opts;
  opts.steps = ro.steps;
  CsvTable t;
  t.header = {"c4", "min_eig_R", "blow_up", "escape_time", "cost", "D_tau", "violations"};
  for (Index i = 1; i <= K; ++i) t.header.push_back("X_tau_" + std::to_string(i));
  int blown = 0;
  for (double c4 : r.values()) {
    CostWeights cw = sc.weights;
    cw.c4 = c4;
    const double min_eig = is_positive_definite(build_R(cw, sc.model)).eigenvalues[0];
    const CtSolution sol = solve_ct(sc.model, cw, sc.horizon, ro);
    std::vector<double> row{c4, min_eig};
    if (sol.blow_up) {
      ++blown;
      row.insert(row.end(), {1.0, sol.blow_up->time, kNaN, kNaN, kNaN});
      for (Index i = 0; i < K; ++i) row.push_back(kNaN);
    } else {
      const ControlledTrajectory tr = rollout(sc.model, cw, sol, initial_state(sc), opts);
      const Index last = tr.samples() - 1;
      row.insert(row.end(), {0.0, kNaN, tr.cost, tr.D[last],
                             static_cast<double>(tr.violations.size())});
      for (Index i = 0; i < K; ++i) row.push_back(tr.X(last, i));
    }
    t.rows.push_back(std::move(row));
  }
  write_atomic(cx.file("_sweep.csv"), to_csv(t));
  cx.out << t.rows.size() << " sweep points, " << blown << " with blow-up\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal timer control for two-hop DTN relays", "dtn-lqr"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  int runs = 0, threads = 0;
  double delta = 0.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "scenario JSON file")->required();
    sub->add_option("--out", o.out, "output directory");
  };
  CLI::App* feas = app.add_subcommand("feasibility", "definiteness of the terminal weight");
  common(feas);
  feas->add_option("--sweep", o.sweep, "c1/c3 range lo:hi:step for the frontier CSV");
  CLI::App* ct = app.add_subcommand("solve-ct", "continuous finite-horizon solution");
  common(ct);
  CLI::App* dt = app.add_subcommand("solve-dt", "discrete finite-horizon solution");
  common(dt);
  dt->add_option("--delta", delta, "discretization step (s)");
  CLI::App* inf = app.add_subcommand("solve-inf", "continuous infinite-horizon policies");
  common(inf);
  CLI::App* dti = app.add_subcommand("solve-dt-inf", "discrete infinite-horizon policies");
  common(dti);
  dti->add_option("--delta", delta, "discretization step (s)");
  CLI::App* sim = app.add_subcommand("simulate", "Monte-Carlo contact-process simulation");
  common(sim);
  sim->add_flag("--uncontrolled", o.uncontrolled, "keep copies forever (no discard timers)");
  sim->add_option("--seed", seed, "base seed");
  sim->add_option("--runs", runs, "number of runs")->check(CLI::PositiveNumber);
  sim->add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  CLI::App* sweep = app.add_subcommand("sweep", "solve-ct over a range of c4");
  common(sweep);
  sweep->add_option("--sweep", o.sweep, "c4 range lo:hi:step")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (sim->count("--seed")) o.seed = seed;
  if (sim->count("--runs")) o.runs = runs;
  if (sim->count("--threads")) o.threads = threads;
  if (dt->count("--delta") || dti->count("--delta")) o.delta = delta;

  try {
    Scenario sc = parse_scenario(o.scenario);
    sc.model.validate();
    sc.weights.validate(sc.model.classes());
    fs::path dir = !o.out.empty() ? fs::path(o.out)
                   : !sc.out_dir.empty() ? fs::path(sc.out_dir)
                                         : fs::path(".");
    std::string prefix = !sc.name.empty() ? sc.name : fs::path(o.scenario).stem().string();
    Context cx{std::move(sc), dir, prefix, out, err};
    if (*feas) return cmd_feasibility(cx, o);
    if (*ct) return cmd_solve_ct(cx);
    if (*dt) return cmd_solve_dt(cx, o);
    if (*inf) return cmd_solve_inf(cx);
    if (*dti) return cmd_solve_dt_inf(cx, o);
    if (*sim) return cmd_simulate(cx, o);
    if (*sweep) return cmd_sweep(cx, o);
    return kExitUsage;
  } catch (const CommandExit& e) {
    err << "dtn-lqr: " << e.message << "\n";
    return e.code;
  } catch (const ScenarioFileError& e) {
    err << "dtn-lqr: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const ScenarioSchemaError& e) {
    err << "dtn-lqr: invalid scenario\n";
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return kExitSchema;
  } catch (const BlowUpError& e) {
    err << "dtn-lqr: " << e.what() << " (t = " << format_double(e.time()) << ")\n";
    return kExitBlowUp;
  } catch (const InfeasibleControlError& e) {
    err << "dtn-lqr: " << e.what() << "\n";
    return kExitInfeasibleTimers;
  } catch (const std::invalid_argument& e) {
    // Scenario values that pass the schema but violate a solver invariant.
    err << "dtn-lqr: invalid scenario: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::exception& e) {
    err << "dtn-lqr: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace dtnlqr

#include "dtnlqr/mc_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include "dtnlqr/detail/numerics.hpp"

namespace dtnlqr {

namespace {

constexpr int kBlock = 64;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform on [0, 1) from the top 53 bits; independent of the library's
// distribution implementations.
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double exponential(std::mt19937_64& gen) { return -std::log1p(-uniform01(gen)); }

std::size_t step_count(const SimConfig& cfg) {
  const double r = cfg.horizon / cfg.rate_grid;
  return static_cast<std::size_t>(std::max(1.0, std::round(r)));
}

// The simulator has no use for the invertibility the solvers need, so a
// class without a source channel (lambda_s = 0) is allowed here.
void check_population(const ModelSpec& m) {
  const Index K = m.classes();
  if (K < 1) throw DimensionError("model needs at least one class");
  if (m.lambda_s.size() != K || m.lambda_d.size() != K) {
    throw DimensionError("contact intensities do not match the class count");
  }
  for (Index i = 0; i < K; ++i) {
    if (!(m.lambda_s[i] >= 0.0)) throw std::invalid_argument("lambda_s must be >= 0");
    if (!(m.lambda_d[i] >= 0.0)) throw std::invalid_argument("lambda_d must be >= 0");
    if (!(m.N[i] > 0.0)) throw std::invalid_argument("N must be > 0");
    if (m.N[i] != std::floor(m.N[i])) {
      throw std::invalid_argument("simulation needs integer N, class " + std::to_string(i));
    }
  }
}

double interp(const std::vector<double>& t, const Mat& Y, Index col, double x) {
  const auto n = t.size();
  if (x <= t.front()) return Y(0, col);
  if (x >= t.back()) return Y(static_cast<Index>(n - 1), col);
  const auto it = std::upper_bound(t.begin(), t.end(), x);
  const auto j = static_cast<Index>(it - t.begin());
  const double s = (x - t[static_cast<std::size_t>(j - 1)]) /
                   (t[static_cast<std::size_t>(j)] - t[static_cast<std::size_t>(j - 1)]);
  return Y(j - 1, col) + s * (Y(j, col) - Y(j - 1, col));
}

// Running mean and sum of squared deviations over runs, merged in a fixed
// order (Chan et al.), per grid time and column.
struct Moments {
  long count = 0;
  Mat mean;
  Mat m2;

  Moments(Index rows, Index cols) : mean(Mat::Zero(rows, cols)), m2(Mat::Zero(rows, cols)) {}

  void add(const Mat& x) {
    ++count;
    const Mat d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d.cwiseProduct(x - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0) return;
    const double na = static_cast<double>(count);
    const double nb = static_cast<double>(o.count);
    const double n = na + nb;
    const Mat d = o.mean - mean;
    mean += d * (nb / n);
    m2 += o.m2 + d.cwiseProduct(d) * (na * nb / n);
    count += o.count;
  }

  Mat se() const {
    if (count < 2) return Mat::Zero(mean.rows(), mean.cols());
    const double n = static_cast<double>(count);
    return (m2 / (n - 1.0) / n).cwiseMax(0.0).cwiseSqrt();
  }
};

struct BlockStats {
  Moments xi;
  Moments psi;
  Moments cdf;
  BlockStats(Index rows, Index K) : xi(rows, K), psi(rows, 1), cdf(rows, 1) {}
};

}  // namespace

void SimConfig::validate() const {
  if (runs < 1) throw std::invalid_argument("sim.runs must be >= 1");
  if (!(rate_grid > 0.0)) throw std::invalid_argument("sim.rate_grid must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("sim.horizon must be > 0");
  if (threads < 0) throw std::invalid_argument("sim.threads must be >= 0");
}

TimerSchedule uncontrolled_schedule(const ModelSpec& m, const SimConfig& cfg) {
  check_population(m);
  cfg.validate();
  const std::size_t n = step_count(cfg);
  TimerSchedule s;
  s.step = cfg.horizon / static_cast<double>(n);
  s.M_bar.assign(n, Vec::Zero(m.classes()));
  return s;
}

TimerSchedule timer_schedule(const ModelSpec& m, const ControlledTrajectory& traj,
                             const SimConfig& cfg) {
  m.validate();
  cfg.validate();
  const Index K = m.classes();
  if (traj.classes() != K || traj.samples() < 2) {
    throw DimensionError("trajectory does not match the model");
  }
  const std::size_t n = step_count(cfg);
  TimerSchedule s;
  s.step = cfg.horizon / static_cast<double>(n);
  s.M_bar.reserve(n);
  std::vector<std::size_t> bad;
  TimerOptions opts;
  opts.clamp_negative = cfg.clamp_negative_timer;
  for (std::size_t j = 0; j < n; ++j) {
    const double tm = (static_cast<double>(j) + 0.5) * s.step;
    Vec u(K), X(K);
    for (Index i = 0; i < K; ++i) {
      u[i] = interp(traj.t, traj.u, i, tm);
      X[i] = interp(traj.t, traj.X, i, tm);
    }
    Vec mbar = Vec::Zero(K);
    bool ok = true;
    try {
      const TimerRates r = timer_rates_from_control(u, X, m, opts);
      mbar = r.M_bar;
      ok = r.negative.empty();
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      bad.push_back(j);
      mbar = mbar.cwiseMax(0.0);
    }
    s.M_bar.push_back(mbar);
  }
  if (!bad.empty()) {
    if (!cfg.clamp_negative_timer) {
      throw InfeasibleScheduleError(
          std::to_string(bad.size()) + " of " + std::to_string(n) +
              " timer steps are infeasible (first at step " + std::to_string(bad.front()) + ")",
          bad);
    }
    s.clamped = std::move(bad);
  }
  return s;
}

SimPath simulate_once(const ModelSpec& m, const TimerSchedule& sched, const SimConfig& cfg,
                      std::uint64_t run_index) {
  check_population(m);
  const Index K = m.classes();
  const std::size_t n = sched.steps();
  std::mt19937_64 gen(splitmix64(cfg.base_seed ^ splitmix64(run_index)));

  SimPath p;
  p.t.resize(n + 1);
  p.H.resize(n + 1);
  p.xi = Mat::Zero(static_cast<Index>(n + 1), K);
  std::vector<long> xi(static_cast<std::size_t>(K), 0);
  std::vector<double> infect(static_cast<std::size_t>(K)), discard(static_cast<std::size_t>(K));
  const double threshold = exponential(gen);
  double H = 0.0;
  p.t[0] = 0.0;
  p.H[0] = 0.0;

  for (std::size_t j = 0; j < n; ++j) {
    const Vec& mb = sched.M_bar[j];
    double t = static_cast<double>(j) * sched.step;
    const double t1 = static_cast<double>(j + 1) * sched.step;
    if (mb.size() != K) throw DimensionError("schedule does not match the model");
    if ((mb.array() < 0.0).any()) {
      throw InfeasibleScheduleError("negative discard rate at step " + std::to_string(j), {j});
    }
    while (t < t1) {
      double total = 0.0;
      double hazard = 0.0;
      for (Index i = 0; i < K; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        infect[ii] = m.lambda_s[i] * (m.N[i] - static_cast<double>(xi[ii]));
        discard[ii] = mb[i] * static_cast<double>(xi[ii]);
        total += infect[ii] + discard[ii];
        hazard += m.lambda_d[i] * static_cast<double>(xi[ii]);
      }
      const double dt = total > 0.0 ? exponential(gen) / total
                                    : std::numeric_limits<double>::infinity();
      const bool fires = t + dt < t1;
      const double end = fires ? t + dt : t1;
      const double dH = hazard * (end - t);
      if (!std::isfinite(p.T_d) && hazard > 0.0 && H + dH >= threshold) {
        p.T_d = t + (threshold - H) / hazard;
      }
      H += dH;
      t = end;
      if (!fires) break;
      // Buckets 2i (infection) and 2i+1 (discard). Rounding can leave `pick`
      // past the end, in which case the last positive bucket is used.
      double pick = uniform01(gen) * total;
      std::size_t chosen = 0;
      for (std::size_t b = 0; b < 2 * static_cast<std::size_t>(K); ++b) {
        const double rate = (b % 2 == 0) ? infect[b / 2] : discard[b / 2];
        if (rate <= 0.0) continue;
        chosen = b;
        if (pick < rate) break;
        pick -= rate;
      }
      if (chosen % 2 == 0) {
        ++xi[chosen / 2];
      } else {
        --xi[chosen / 2];
      }
      ++p.events;
    }
    const auto row = static_cast<Index>(j + 1);
    p.t[j + 1] = t1;
    p.H[j + 1] = H;
    for (Index i = 0; i < K; ++i) p.xi(row, i) = static_cast<double>(xi[static_cast<std::size_t>(i)]);
  }
  return p;
}

Mat mean_field_X(const ModelSpec& m, const TimerSchedule& sched) {
  const Index K = m.classes();
  const std::size_t n = sched.steps();
  Mat X = Mat::Zero(static_cast<Index>(n + 1), K);
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = static_cast<Index>(j);
    for (Index i = 0; i < K; ++i) {
      const double rate = m.lambda_s[i] + sched.M_bar[j][i];
      const double x = X(r, i);
      if (rate <= 0.0) {
        X(r + 1, i) = x;
        continue;
      }
      const double x_eq = m.lambda_s[i] * m.N[i] / rate;
      X(r + 1, i) = x_eq + (x - x_eq) * std::exp(-rate * sched.step);
    }
  }
  return X;
}

Vec mean_field_D(const ModelSpec& m, const TimerSchedule& sched) {
  const Index K = m.classes();
  const std::size_t n = sched.steps();
  const Mat X = mean_field_X(m, sched);
  Vec D = Vec::Zero(static_cast<Index>(n + 1));
  Vec Xhat = Vec::Zero(K);
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = static_cast<Index>(j);
    for (Index i = 0; i < K; ++i) {
      const double rate = m.lambda_s[i] + sched.M_bar[j][i];
      const double x = X(r, i);
      if (rate <= 0.0) {
        Xhat[i] += x * sched.step;
        continue;
      }
      const double x_eq = m.lambda_s[i] * m.N[i] / rate;
      Xhat[i] += x_eq * sched.step + (x - x_eq) * sched.step * detail::phi1(rate * sched.step);
    }
    D[r + 1] = delivery_functional(Xhat, m.lambda_d);
  }
  return D;
}

SimEnsemble monte_carlo(const ModelSpec& m, const TimerSchedule& sched, const SimConfig& cfg) {
  check_population(m);
  cfg.validate();
  const Index K = m.classes();
  const std::size_t n = sched.steps();
  const auto rows = static_cast<Index>(n + 1);
  const int blocks = (cfg.runs + kBlock - 1) / kBlock;
  std::vector<BlockStats> stats(static_cast<std::size_t>(blocks), BlockStats(rows, K));

  std::vector<double> grid(n + 1);
  for (std::size_t j = 0; j <= n; ++j) grid[j] = static_cast<double>(j) * sched.step;

  auto run_block = [&](int b) {
    BlockStats& st = stats[static_cast<std::size_t>(b)];
    const int lo = b * kBlock;
    const int hi = std::min(cfg.runs, lo + kBlock);
    Mat psi(rows, 1), cdf(rows, 1);
    for (int r = lo; r < hi; ++r) {
      const SimPath p = simulate_once(m, sched, cfg, static_cast<std::uint64_t>(r));
      for (Index j = 0; j < rows; ++j) {
        const auto js = static_cast<std::size_t>(j);
        psi(j, 0) = -std::expm1(-p.H[js]);
        cdf(j, 0) = p.T_d <= grid[js] ? 1.0 : 0.0;
      }
      st.xi.add(p.xi);
      st.psi.add(psi);
      st.cdf.add(cdf);
    }
  };

  int threads = cfg.threads == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                                 : cfg.threads;
  threads = std::clamp(threads, 1, std::max(1, blocks));
  if (threads == 1) {
    for (int b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int b = next++; b < blocks; b = next++) run_block(b);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
          next = blocks;
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  BlockStats total(rows, K);
  for (const auto& st : stats) {
    total.xi.merge(st.xi);
    total.psi.merge(st.psi);
    total.cdf.merge(st.cdf);
  }
  SimEnsemble e;
  e.t = grid;
  e.runs = cfg.runs;
  e.mean_xi = total.xi.mean;
  e.se_xi = total.xi.se();
  e.mean_psi = total.psi.mean.col(0);
  e.se_psi = total.psi.se().col(0);
  e.cdf_Td = total.cdf.mean.col(0);
  e.se_cdf = total.cdf.se().col(0);
  e.ode_X = mean_field_X(m, sched);
  return e;
}

std::vector<JensenRow> jensen_report(const SimEnsemble& ens, const std::vector<double>& t,
                                     const Vec& D) {
  const auto n = ens.t.size();
  if (t.size() != n || static_cast<std::size_t>(D.size()) != n) {
    throw DimensionError("Jensen report: grid length mismatch");
  }
  std::vector<JensenRow> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double scale = std::max(1.0, std::abs(ens.t[j]));
    if (std::abs(t[j] - ens.t[j]) > 1e-9 * scale) {
      throw DimensionError("Jensen report: grid time mismatch at index " + std::to_string(j));
    }
    const auto jj = static_cast<Index>(j);
    JensenRow r;
    r.t = ens.t[j];
    r.mean_psi = ens.mean_psi[jj];
    r.D = D[jj];
    r.diff = r.mean_psi - r.D;
    r.se = ens.se_psi[jj];
    if (std::abs(r.diff) > 3.0 * r.se) r.flag = r.diff > 0.0 ? 1 : -1;
    out.push_back(r);
  }
  return out;
}

}  // namespace dtnlqr

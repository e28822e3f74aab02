#include "dtnlqr/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dtnlqr {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& p : v) {
    if (!s.empty()) s += "; ";
    s += p;
  }
  return s;
}

enum class Bound { Any, NonNegative, Positive, NonPositive };

class Reader {
 public:
  std::vector<std::string> problems;

  void fail(const std::string& path, const std::string& msg) { problems.push_back(path + ": " + msg); }

  // Returns the object at `key`, or nullptr if it is absent (reported when
  // `required_leaves` is non-empty) or not an object.
  const json* object(const json& parent, const std::string& key, const std::string& path,
                     const std::vector<std::string>& required_leaves) {
    if (!parent.contains(key)) {
      for (const auto& leaf : required_leaves) fail(path + "." + leaf, "required field missing");
      return nullptr;
    }
    const json& o = parent.at(key);
    if (!o.is_object()) {
      fail(path, "must be an object");
      return nullptr;
    }
    return &o;
  }

  void known_keys(const json& o, const std::string& prefix, const std::set<std::string>& allowed) {
    for (const auto& [k, v] : o.items()) {
      (void)v;
      if (!allowed.count(k)) fail(prefix.empty() ? k : prefix + "." + k, "unknown key");
    }
  }

  bool check_bound(double x, Bound b, const std::string& path) {
    if (!std::isfinite(x)) {
      fail(path, "must be finite");
      return false;
    }
    switch (b) {
      case Bound::NonNegative:
        if (x < 0.0) { fail(path, "must be >= 0"); return false; }
        break;
      case Bound::Positive:
        if (!(x > 0.0)) { fail(path, "must be > 0"); return false; }
        break;
      case Bound::NonPositive:
        if (x > 0.0) { fail(path, "must be <= 0"); return false; }
        break;
      case Bound::Any:
        break;
    }
    return true;
  }

  bool number(const json& o, const std::string& key, const std::string& path, bool required,
              Bound b, double& out) {
    if (!o.contains(key)) {
      if (required) fail(path, "required field missing");
      return false;
    }
    const json& v = o.at(key);
    if (!v.is_number()) {
      fail(path, "must be a number");
      return false;
    }
    const double x = v.get<double>();
    if (!check_bound(x, b, path)) return false;
    out = x;
    return true;
  }

  bool vector(const json& o, const std::string& key, const std::string& path, bool required,
              Bound b, Vec& out) {
    if (!o.contains(key)) {
      if (required) fail(path, "required field missing");
      return false;
    }
    const json& v = o.at(key);
    if (!v.is_array() || v.empty()) {
      fail(path, "must be a non-empty array of numbers");
      return false;
    }
    Vec r(static_cast<Index>(v.size()));
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      if (!v[i].is_number()) {
        fail(p, "must be a number");
        ok = false;
        continue;
      }
      const double x = v[i].get<double>();
      ok = check_bound(x, b, p) && ok;
      r[static_cast<Index>(i)] = x;
    }
    if (ok) out = r;
    return ok;
  }

  bool matrix(const json& o, const std::string& key, const std::string& path, Mat& out) {
    if (!o.contains(key)) return false;
    const json& v = o.at(key);
    if (!v.is_array() || v.empty() || !v[0].is_array()) {
      fail(path, "must be an array of rows");
      return false;
    }
    const std::size_t rows = v.size();
    const std::size_t cols = v[0].size();
    Mat r(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
      if (!v[i].is_array() || v[i].size() != cols) {
        fail(path + "[" + std::to_string(i) + "]", "rows must have equal length");
        return false;
      }
      for (std::size_t j = 0; j < cols; ++j) {
        if (!v[i][j].is_number()) {
          fail(path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]", "must be a number");
          return false;
        }
        r(static_cast<Index>(i), static_cast<Index>(j)) = v[i][j].get<double>();
      }
    }
    out = r;
    return true;
  }

  template <class T>
  bool integer(const json& o, const std::string& key, const std::string& path, T lo, T& out) {
    if (!o.contains(key)) return false;
    const json& v = o.at(key);
    if (!v.is_number_integer() || (v.is_number_unsigned() ? false : v.get<long long>() < static_cast<long long>(lo))) {
      fail(path, "must be an integer >= " + std::to_string(lo));
      return false;
    }
    out = v.get<T>();
    return true;
  }

  bool string(const json& o, const std::string& key, const std::string& path, std::string& out) {
    if (!o.contains(key)) return false;
    if (!o.at(key).is_string()) {
      fail(path, "must be a string");
      return false;
    }
    out = o.at(key).get<std::string>();
    return true;
  }

  bool boolean(const json& o, const std::string& key, const std::string& path, bool& out) {
    if (!o.contains(key)) return false;
    if (!o.at(key).is_boolean()) {
      fail(path, "must be true or false");
      return false;
    }
    out = o.at(key).get<bool>();
    return true;
  }
};

}  // namespace

ScenarioSchemaError::ScenarioSchemaError(std::vector<std::string> problems)
    : std::runtime_error("invalid scenario: " + join(problems)), problems_(std::move(problems)) {}

int Grids::ode_steps(double horizon) const {
  if (ode_step <= 0.0) return 4096;
  return static_cast<int>(std::max(1.0, std::round(horizon / ode_step)));
}

int Grids::dt_steps(double horizon) const {
  if (Delta <= 0.0) return 4096;
  return static_cast<int>(std::max(1.0, std::round(horizon / Delta)));
}

Scenario parse_scenario_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioSchemaError({std::string("<root>: not valid JSON (") + e.what() + ")"});
  }
  if (!root.is_object()) throw ScenarioSchemaError({"<root>: must be a JSON object"});

  Reader rd;
  Scenario sc;
  rd.known_keys(root, "",
                {"name", "description", "model", "weights", "horizon", "grids", "sim", "outputs"});
  rd.string(root, "name", "name", sc.name);
  rd.string(root, "description", "description", sc.description);

  if (const json* mo = rd.object(root, "model", "model", {"lambda_s", "lambda_d", "N"})) {
    rd.known_keys(*mo, "model", {"lambda_s", "lambda_d", "lambda_out", "N", "X0", "source_class", "dest_class"});
    rd.vector(*mo, "lambda_s", "model.lambda_s", true, Bound::Positive, sc.model.lambda_s);
    rd.vector(*mo, "lambda_d", "model.lambda_d", true, Bound::Positive, sc.model.lambda_d);
    rd.vector(*mo, "N", "model.N", true, Bound::Positive, sc.model.N);
    rd.vector(*mo, "lambda_out", "model.lambda_out", false, Bound::Positive, sc.model.lambda_out);
    rd.vector(*mo, "X0", "model.X0", false, Bound::NonNegative, sc.X0);
    rd.integer(*mo, "source_class", "model.source_class", 0, sc.model.source_class);
    rd.integer(*mo, "dest_class", "model.dest_class", 0, sc.model.dest_class);
  }
  const Index K = sc.model.N.size();
  auto check_len = [&](Index n, const char* path) {
    if (K > 0 && n != 0 && n != K) {
      rd.fail(path, "has " + std::to_string(n) + " entries, expected " + std::to_string(K));
    }
  };
  check_len(sc.model.lambda_s.size(), "model.lambda_s");
  check_len(sc.model.lambda_d.size(), "model.lambda_d");
  check_len(sc.model.lambda_out.size(), "model.lambda_out");
  check_len(sc.X0.size(), "model.X0");

  if (const json* wo = rd.object(root, "weights", "weights", {"c1", "c3", "c4"})) {
    rd.known_keys(*wo, "weights", {"c1", "c3", "c4", "u_bar", "q", "Q"});
    rd.number(*wo, "c1", "weights.c1", true, Bound::NonNegative, sc.weights.c1);
    rd.number(*wo, "c3", "weights.c3", true, Bound::NonNegative, sc.weights.c3);
    rd.number(*wo, "c4", "weights.c4", true, Bound::NonNegative, sc.weights.c4);
    rd.vector(*wo, "u_bar", "weights.u_bar", false, Bound::NonPositive, sc.weights.u_bar);
    rd.vector(*wo, "q", "weights.q", false, Bound::Positive, sc.weights.q);
    if (rd.matrix(*wo, "Q", "weights.Q", sc.weights.Q) && K > 0 &&
        (sc.weights.Q.rows() != 2 * K || sc.weights.Q.cols() != 2 * K)) {
      rd.fail("weights.Q", "must be " + std::to_string(2 * K) + "x" + std::to_string(2 * K));
    }
  }
  check_len(sc.weights.u_bar.size(), "weights.u_bar");
  check_len(sc.weights.q.size(), "weights.q");

  rd.number(root, "horizon", "horizon", true, Bound::Positive, sc.horizon);

  if (const json* go = rd.object(root, "grids", "grids", {})) {
    rd.known_keys(*go, "grids", {"ode_step", "control_step", "Delta"});
    rd.number(*go, "ode_step", "grids.ode_step", false, Bound::Positive, sc.grids.ode_step);
    rd.number(*go, "control_step", "grids.control_step", false, Bound::Positive,
              sc.grids.control_step);
    rd.number(*go, "Delta", "grids.Delta", false, Bound::Positive, sc.grids.Delta);
  }

  sc.sim.runs = 1000;
  if (const json* so = rd.object(root, "sim", "sim", {})) {
    rd.known_keys(*so, "sim", {"runs", "seed", "rate_grid", "clamp_negative_timer", "threads"});
    rd.integer(*so, "runs", "sim.runs", 1, sc.sim.runs);
    rd.integer(*so, "seed", "sim.seed", std::uint64_t{0}, sc.sim.base_seed);
    rd.number(*so, "rate_grid", "sim.rate_grid", false, Bound::Positive, sc.sim.rate_grid);
    rd.boolean(*so, "clamp_negative_timer", "sim.clamp_negative_timer",
               sc.sim.clamp_negative_timer);
    rd.integer(*so, "threads", "sim.threads", 0, sc.sim.threads);
  }

  if (const json* oo = rd.object(root, "outputs", "outputs", {})) {
    rd.known_keys(*oo, "outputs", {"dir"});
    rd.string(*oo, "dir", "outputs.dir", sc.out_dir);
  }

  if (!rd.problems.empty()) throw ScenarioSchemaError(rd.problems);

  if (sc.X0.size() == 0) sc.X0 = Vec::Zero(K);
  for (Index i = 0; i < K; ++i) {
    if (sc.X0[i] > sc.model.N[i]) rd.fail("model.X0[" + std::to_string(i) + "]", "must be <= N");
  }
  if (sc.model.source_class >= K) rd.fail("model.source_class", "out of range");
  if (sc.model.dest_class >= K) rd.fail("model.dest_class", "out of range");
  if (sc.grids.ode_step > sc.horizon) rd.fail("grids.ode_step", "exceeds horizon");
  if (sc.grids.Delta > sc.horizon) rd.fail("grids.Delta", "exceeds horizon");
  if (!rd.problems.empty()) throw ScenarioSchemaError(rd.problems);

  if (sc.grids.ode_step <= 0.0) sc.grids.ode_step = sc.horizon / 4096.0;
  if (sc.grids.Delta <= 0.0) sc.grids.Delta = sc.horizon / 4096.0;
  if (sc.grids.control_step <= 0.0) sc.grids.control_step = sc.grids.ode_step;
  if (sc.sim.rate_grid <= 0.0) sc.sim.rate_grid = sc.grids.control_step;
  sc.sim.horizon = sc.horizon;
  return sc;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path)) {
    throw ScenarioFileError("cannot read scenario file: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

}  // namespace dtnlqr

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtnlqr/common.hpp"
#include "dtnlqr/mc_sim.hpp"
#include "dtnlqr/model.hpp"

namespace dtnlqr {

struct Grids {
  double ode_step = 0.0;      // Riccati / rollout grid; 0 means horizon / 4096
  double control_step = 0.0;  // timer-rate grid for the simulator; 0 means ode_step
  double Delta = 0.0;         // discrete solver step; 0 means horizon / 4096

  int ode_steps(double horizon) const;
  int dt_steps(double horizon) const;
};

struct Scenario {
  std::string name;
  std::string description;
  ModelSpec model;
  CostWeights weights;
  Vec X0;  // initial copies, zeros by default
  double horizon = 0.0;
  Grids grids;
  SimConfig sim;
  std::string out_dir;  // empty: caller decides
};

/// The scenario file does not exist or cannot be read.
class ScenarioFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Schema violations, each with the dotted path of the offending field.
class ScenarioSchemaError : public std::runtime_error {
 public:
  explicit ScenarioSchemaError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario(const std::filesystem::path& path);

}  // namespace dtnlqr

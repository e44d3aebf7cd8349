#pragma once

#include <iosfwd>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

namespace dpl {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochRow {
  int epoch = 0;
  double return_mean = kNaN;
  double return_se = kNaN;
  std::vector<double> sigma2;      // per agent (Gaussian classes)
  bool reached_goal = false;       // goal seen at or before this epoch
  double ne_gap = kNaN;
  std::vector<double> td_loss;     // per agent
  std::vector<double> issm_loss;   // per agent
  std::vector<long> clamp_count;   // per agent, cumulative
};

struct PolicySnapshot {
  int epoch = 0;
  int agent = 0;
  nlohmann::json data;
};

struct TrainLog {
  int n_agents = 1;
  std::vector<EpochRow> epochs;
  std::vector<PolicySnapshot> snapshots;
  int first_reach_epoch = -1;  // -1 = never
};

void write_decspg_csv(const TrainLog& log, std::ostream& os);
void write_ddpl_csv(const TrainLog& log, std::ostream& os);

}  // namespace dpl

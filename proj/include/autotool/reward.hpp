#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "autotool/rollout.hpp"
#include "json.hpp"

namespace autotool {

/// per_step: acc = 1 iff the chosen tool is the truth tool for that sub-goal.
/// final_answer: additionally requires every step of the trajectory to be correct.
enum class AccMode { per_step, final_answer };

std::string_view to_string(AccMode m) noexcept;
AccMode acc_mode_from_string(std::string_view s);

struct RewardConfig {
  AccMode acc_mode = AccMode::per_step;
  double prm_weight = 1.0;
  double acc_weight = 1.0;
};

struct StepReward {
  double prm = 0.0;
  double acc = 0.0;
  double total = 0.0;
};

struct TrajectoryReward {
  std::vector<StepReward> per_step;
  double r_total = 0.0;
};

/// `segment_index` must point at a select segment.
/// prm = clamp((1 + cos(anchor, e_truth)) / 2, 0, 1).
StepReward score_step(const Trajectory& traj, std::size_t segment_index, const Task& task, const ToolLibrary& lib,
                      const RewardConfig& config = {});

/// Mean of the step totals over the selection segments.
TrajectoryReward score_trajectory(const Trajectory& traj, const Task& task, const ToolLibrary& lib,
                                  const RewardConfig& config = {});

std::vector<TrajectoryReward> score_rollouts(const RolloutSet& set, const Task& task, const ToolLibrary& lib,
                                             const RewardConfig& config = {});

/// r_total of each trajectory, in set order.
Vec reward_totals(std::span<const TrajectoryReward> rewards);

nlohmann::ordered_json reward_to_json(const TrajectoryReward& r);

/// Trajectory JSONL with each line's reward record under "rewards".
void write_scored_rollouts_jsonl(std::ostream& out, const RolloutSet& set, std::span<const TrajectoryReward> rewards);

}  // namespace autotool

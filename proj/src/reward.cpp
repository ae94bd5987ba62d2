#include "autotool/reward.hpp"

#include <algorithm>
#include <ostream>

#include "autotool/errors.hpp"

namespace autotool {

std::string_view to_string(AccMode m) noexcept {
  return m == AccMode::per_step ? "per_step" : "final_answer";
}

AccMode acc_mode_from_string(std::string_view s) {
  if (s == "per_step") return AccMode::per_step;
  if (s == "final_answer") return AccMode::final_answer;
  throw ContractViolation("unknown acc mode: " + std::string(s));
}

StepReward score_step(const Trajectory& traj, std::size_t segment_index, const Task& task, const ToolLibrary& lib,
                      const RewardConfig& config) {
  if (segment_index >= traj.segments.size() || traj.segments[segment_index].kind != SegmentKind::select) {
    throw ContractViolation("score_step: segment " + std::to_string(segment_index) + " is not a selection step");
  }
  const Segment& seg = traj.segments[segment_index];
  if (seg.step_index >= task.length()) throw ContractViolation("score_step: step beyond task length");
  const SelectRecord& rec = seg.select();
  const ToolId truth = task.subgoals[seg.step_index].truth_tool_id;

  StepReward r;
  r.prm = std::clamp((1.0 + cosine(rec.anchor, lib.embedding_vector(truth))) / 2.0, 0.0, 1.0);
  bool correct = rec.chosen == truth;
  if (config.acc_mode == AccMode::final_answer) correct = correct && traj.final_correct;
  r.acc = correct ? 1.0 : 0.0;
  r.total = config.prm_weight * r.prm + config.acc_weight * r.acc;
  return r;
}

TrajectoryReward score_trajectory(const Trajectory& traj, const Task& task, const ToolLibrary& lib,
                                  const RewardConfig& config) {
  if (traj.selection_indices.empty()) throw ContractViolation("score_trajectory: no selection steps");
  TrajectoryReward out;
  double sum = 0.0;
  for (std::size_t idx : traj.selection_indices) {
    out.per_step.push_back(score_step(traj, idx, task, lib, config));
    sum += out.per_step.back().total;
  }
  out.r_total = sum / static_cast<double>(out.per_step.size());
  return out;
}

std::vector<TrajectoryReward> score_rollouts(const RolloutSet& set, const Task& task, const ToolLibrary& lib,
                                             const RewardConfig& config) {
  std::vector<TrajectoryReward> out;
  out.reserve(set.size());
  for (const Trajectory& t : set.trajectories) out.push_back(score_trajectory(t, task, lib, config));
  return out;
}

Vec reward_totals(std::span<const TrajectoryReward> rewards) {
  Vec out;
  out.reserve(rewards.size());
  for (const auto& r : rewards) out.push_back(r.r_total);
  return out;
}

nlohmann::ordered_json reward_to_json(const TrajectoryReward& r) {
  nlohmann::ordered_json j;
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : r.per_step) steps.push_back({{"prm", s.prm}, {"acc", s.acc}, {"total", s.total}});
  j["per_step"] = std::move(steps);
  j["r_total"] = r.r_total;
  return j;
}

void write_scored_rollouts_jsonl(std::ostream& out, const RolloutSet& set, std::span<const TrajectoryReward> rewards) {
  if (rewards.size() != set.size()) throw ContractViolation("write_scored_rollouts_jsonl: reward count mismatch");
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto j = trajectory_to_json(set.trajectories[i]);
    j["rewards"] = reward_to_json(rewards[i]);
    out << j.dump() << '\n';
  }
}

}  // namespace autotool

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "autotool/policy.hpp"
#include "autotool/taskgen.hpp"
#include "json.hpp"

namespace autotool {

enum class SegmentKind { reason, select, integrate };

std::string_view to_string(SegmentKind k) noexcept;

struct ReasonStub {
  std::string token;
};

/// Everything needed to replay a selection under different parameters.
struct SelectRecord {
  ContextState context;
  Vec anchor;
  std::vector<ToolId> pool;
  ToolId chosen{};
  double log_prob = 0.0;
  Vec probs;  // aligned with pool
};

struct Segment {
  SegmentKind kind = SegmentKind::reason;
  std::size_t step_index = 0;
  std::variant<ReasonStub, SelectRecord, ToolFeedback> payload;

  const SelectRecord& select() const { return std::get<SelectRecord>(payload); }
  const ToolFeedback& feedback() const { return std::get<ToolFeedback>(payload); }
};

struct Trajectory {
  std::uint64_t task_id = 0;
  std::uint64_t seed = 0;
  std::vector<Segment> segments;
  std::vector<std::size_t> selection_indices;  // positions of select segments
  double total_log_prob = 0.0;
  bool final_correct = false;

  std::size_t selection_count() const noexcept { return selection_indices.size(); }
  const SelectRecord& selection(std::size_t i) const { return segments.at(selection_indices.at(i)).select(); }
};

struct RolloutSet {
  std::uint64_t task_id = 0;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const noexcept { return trajectories.size(); }
};

inline constexpr std::size_t kDefaultRollouts = 8;
/// Length of the feedback penalty added to a wrongly chosen tool's embedding
/// before it is folded into the history summary.
inline constexpr double kFeedbackPenalty = 0.25;

/// Library-seeded direction that marks incorrect-tool feedback in the history.
Vec feedback_penalty_direction(const ToolLibrary& lib);

/// Reason -> select -> integrate per sub-goal. Selection k draws from
/// derive_seed(seed, k); the history summary is the running mean of chosen
/// embeddings, each shifted by the penalty direction when its feedback was wrong.
Trajectory generate_trajectory(const PolicyParams& params, const Task& task, const ToolLibrary& lib,
                               std::span<const ToolId> pool, SelectMode mode, std::uint64_t seed);

/// Anchor placed on the truth tool's embedding at every step, greedy selection.
Trajectory generate_oracle_trajectory(const Task& task, const ToolLibrary& lib, std::span<const ToolId> pool,
                                      double gamma);

/// N trajectories; trajectory i uses seed ^ i. Order is by index whatever `threads` is.
RolloutSet collect_rollouts(const PolicyParams& params, const Task& task, const ToolLibrary& lib,
                            std::span<const ToolId> pool, std::size_t n, std::uint64_t seed,
                            SelectMode mode = SelectMode::sample, std::size_t threads = 1);

/// Throws ContractViolation if the segments break the reason/select/integrate
/// grammar or the stored log-probs disagree with their distributions.
void check_structure(const Trajectory& traj);

nlohmann::ordered_json trajectory_to_json(const Trajectory& traj);
void write_rollouts_jsonl(std::ostream& out, const RolloutSet& set);

/// FNV-1a over the JSONL encoding of the set.
std::uint64_t rollout_digest(const RolloutSet& set);

}  // namespace autotool

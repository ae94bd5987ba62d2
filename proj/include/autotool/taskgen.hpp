#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "autotool/toolset.hpp"
#include "json.hpp"

namespace autotool {

inline constexpr std::size_t kMaxTaskLength = 6;

enum class PoolKind { seen_only, full };

std::string_view to_string(PoolKind p) noexcept;
PoolKind pool_from_string(std::string_view s);

/// Candidate ids for a pool choice, in ascending id order.
std::vector<ToolId> pool_ids(const ToolLibrary& lib, PoolKind pool);

struct SubGoal {
  std::size_t index = 0;
  Vec feature;
  ToolId truth_tool_id{};  // simulator-private
};

struct Task {
  std::uint64_t task_id = 0;
  Vec context;
  std::vector<SubGoal> subgoals;
  std::vector<ToolId> allowed_tools;

  std::size_t length() const noexcept { return subgoals.size(); }
  bool allows(ToolId id) const;
};

struct TaskGenOptions {
  /// Every step's truth tool must beat the runner-up latent score by this much.
  double min_margin = 0.2;
  /// Feature drift along the progress direction, scaled by step / kMaxTaskLength.
  double drift = 3.0;
  std::size_t max_attempts = 100000;
};

/// Library-wide direction along which sub-goal features move as a task progresses.
Vec progress_direction(const ToolLibrary& lib);

/// argmax over `allowed` of dot(latent_function, feature); ties go to the smallest id.
ToolId truth_tool(const ToolLibrary& lib, std::span<const ToolId> allowed, std::span<const double> feature);

Task generate_task(const ToolLibrary& lib, std::size_t length, PoolKind pool, std::uint64_t seed,
                   const TaskGenOptions& options = {});

/// Same as above with an explicit candidate pool (curriculum restriction).
Task generate_task(const ToolLibrary& lib, std::size_t length, std::span<const ToolId> allowed,
                   std::uint64_t seed, const TaskGenOptions& options = {});

struct ToolFeedback {
  bool correct = false;
  std::string payload;
};

/// Simulated tool execution. Picking a tool outside the task's pool is not an
/// exception; it yields correct=false with payload "tool-unavailable".
ToolFeedback execute_tool(const Task& task, std::size_t step, ToolId tool_id);

/// Truth fields live under "simulator_private".
nlohmann::ordered_json task_to_json(const Task& task);
Task task_from_json(const nlohmann::json& j);
/// The policy-facing view: no "simulator_private" key.
nlohmann::ordered_json task_public_view(const Task& task);

void write_tasks_jsonl(std::ostream& out, std::span<const Task> tasks);
std::vector<Task> read_tasks_jsonl(std::istream& in);

}  // namespace autotool

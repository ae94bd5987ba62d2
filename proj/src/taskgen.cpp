#include "autotool/taskgen.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>

#include "autotool/errors.hpp"
#include "autotool/rng.hpp"

namespace autotool {
namespace {

Vec random_unit(Rng& rng, std::size_t dim) {
  Vec v(dim);
  do {
    for (double& x : v) x = rng.normal();
  } while (norm(v) < 1e-12);
  return normalized(v);
}

Vec step_feature(std::span<const double> context, std::span<const double> progress, std::size_t step,
                 double drift) {
  const double t = drift * static_cast<double>(step) / static_cast<double>(kMaxTaskLength);
  Vec f(context.begin(), context.end());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += t * progress[i];
  return normalized(f);
}

// Gap between the best and second-best latent score over `allowed`.
double truth_margin(const ToolLibrary& lib, std::span<const ToolId> allowed, std::span<const double> feature) {
  if (allowed.size() < 2) return std::numeric_limits<double>::infinity();
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  for (ToolId id : allowed) {
    const double s = dot(lib.latent(id), feature);
    if (s > best) {
      second = best;
      best = s;
    } else if (s > second) {
      second = s;
    }
  }
  return best - second;
}

}  // namespace

std::string_view to_string(PoolKind p) noexcept {
  return p == PoolKind::seen_only ? "seen_only" : "full";
}

PoolKind pool_from_string(std::string_view s) {
  if (s == "seen_only" || s == "seen") return PoolKind::seen_only;
  if (s == "full") return PoolKind::full;
  throw ContractViolation("unknown pool kind: " + std::string(s));
}

std::vector<ToolId> pool_ids(const ToolLibrary& lib, PoolKind pool) {
  std::vector<ToolId> out;
  if (pool == PoolKind::seen_only) {
    out.assign(lib.seen_ids().begin(), lib.seen_ids().end());
  } else {
    out = lib.ids();
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool Task::allows(ToolId id) const {
  return std::find(allowed_tools.begin(), allowed_tools.end(), id) != allowed_tools.end();
}

Vec progress_direction(const ToolLibrary& lib) {
  Rng rng(derive_seed(lib.seed(), "task-progress"));
  return random_unit(rng, lib.dim());
}

ToolId truth_tool(const ToolLibrary& lib, std::span<const ToolId> allowed, std::span<const double> feature) {
  if (allowed.empty()) throw GenerationError("truth_tool: empty candidate pool");
  ToolId best = allowed.front();
  double best_score = dot(lib.latent(best), feature);
  for (ToolId id : allowed.subspan(1)) {
    const double s = dot(lib.latent(id), feature);
    if (s > best_score || (s == best_score && id < best)) {
      best = id;
      best_score = s;
    }
  }
  return best;
}

Task generate_task(const ToolLibrary& lib, std::size_t length, PoolKind pool, std::uint64_t seed,
                   const TaskGenOptions& options) {
  const auto ids = pool_ids(lib, pool);
  return generate_task(lib, length, ids, seed, options);
}

Task generate_task(const ToolLibrary& lib, std::size_t length, std::span<const ToolId> allowed,
                   std::uint64_t seed, const TaskGenOptions& options) {
  if (length < 1 || length > kMaxTaskLength) {
    throw ContractViolation("generate_task: length must be in [1, " + std::to_string(kMaxTaskLength) + "]");
  }
  if (lib.size() == 0) throw ContractViolation("generate_task: empty library");
  if (allowed.empty()) throw GenerationError("generate_task: empty tool pool");
  for (ToolId id : allowed) {
    if (!lib.contains(id)) throw GenerationError("generate_task: pool id not in library");
  }

  const Vec progress = progress_direction(lib);
  Rng rng(derive_seed(seed, "task"));
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    Task task;
    task.task_id = seed;
    task.context = random_unit(rng, lib.dim());
    task.allowed_tools.assign(allowed.begin(), allowed.end());
    bool accepted = true;
    for (std::size_t i = 0; i < length && accepted; ++i) {
      Vec f = step_feature(task.context, progress, i, options.drift);
      accepted = truth_margin(lib, allowed, f) >= options.min_margin;
      const ToolId truth = truth_tool(lib, allowed, f);
      task.subgoals.push_back(SubGoal{i, std::move(f), truth});
    }
    if (accepted) return task;
  }
  throw GenerationError("generate_task: no context met the truth margin after " +
                        std::to_string(options.max_attempts) + " attempts");
}

ToolFeedback execute_tool(const Task& task, std::size_t step, ToolId tool_id) {
  if (step >= task.length()) throw ContractViolation("execute_tool: step out of range");
  if (!task.allows(tool_id)) return ToolFeedback{false, "tool-unavailable"};
  const bool ok = task.subgoals[step].truth_tool_id == tool_id;
  return ToolFeedback{ok, std::string(ok ? "result" : "mismatch") + ":" + std::to_string(id_value(tool_id)) +
                              ":" + std::to_string(step)};
}

nlohmann::ordered_json task_public_view(const Task& task) {
  nlohmann::ordered_json j;
  j["task_id"] = task.task_id;
  j["context"] = task.context;
  j["length"] = task.length();
  auto allowed = nlohmann::ordered_json::array();
  for (ToolId id : task.allowed_tools) allowed.push_back(id_value(id));
  j["allowed_tools"] = std::move(allowed);
  return j;
}

nlohmann::ordered_json task_to_json(const Task& task) {
  nlohmann::ordered_json j = task_public_view(task);
  auto subgoals = nlohmann::ordered_json::array();
  for (const auto& sg : task.subgoals) {
    nlohmann::ordered_json s;
    s["index"] = sg.index;
    s["feature"] = sg.feature;
    s["truth_tool_id"] = id_value(sg.truth_tool_id);
    subgoals.push_back(std::move(s));
  }
  j["simulator_private"] = {{"subgoals", std::move(subgoals)}};
  return j;
}

Task task_from_json(const nlohmann::json& j) {
  try {
    Task t;
    t.task_id = j.at("task_id").get<std::uint64_t>();
    t.context = j.at("context").get<Vec>();
    for (const auto& v : j.at("allowed_tools")) t.allowed_tools.push_back(ToolId{v.get<std::uint32_t>()});
    for (const auto& s : j.at("simulator_private").at("subgoals")) {
      t.subgoals.push_back(SubGoal{s.at("index").get<std::size_t>(), s.at("feature").get<Vec>(),
                                   ToolId{s.at("truth_tool_id").get<std::uint32_t>()}});
    }
    if (t.subgoals.size() != j.at("length").get<std::size_t>()) {
      throw IoError("task JSON: length does not match sub-goal count");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed task JSON: ") + e.what());
  }
}

void write_tasks_jsonl(std::ostream& out, std::span<const Task> tasks) {
  for (const auto& t : tasks) out << task_to_json(t).dump() << '\n';
}

std::vector<Task> read_tasks_jsonl(std::istream& in) {
  std::vector<Task> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(task_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(std::string("task JSONL: ") + e.what());
    }
  }
  return out;
}

}  // namespace autotool

#include "autotool/rollout.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "autotool/errors.hpp"
#include "autotool/parallel.hpp"
#include "autotool/rng.hpp"

namespace autotool {
namespace {

using AnchorFn = std::function<Vec(const ContextState&, std::size_t step)>;

Trajectory run(const AnchorFn& anchor_fn, double gamma, const Task& task, const ToolLibrary& lib,
               std::span<const ToolId> pool, SelectMode mode, std::uint64_t seed) {
  if (task.length() == 0) throw ContractViolation("generate_trajectory: task has no sub-goals");
  if (task.context.size() != lib.dim()) throw ContractViolation("generate_trajectory: task dimension mismatch");

  const Vec penalty = feedback_penalty_direction(lib);
  Trajectory traj;
  traj.task_id = task.task_id;
  traj.seed = seed;
  traj.final_correct = true;

  Vec history_sum(lib.dim(), 0.0);
  Vec history(lib.dim(), 0.0);
  for (std::size_t step = 0; step < task.length(); ++step) {
    traj.segments.push_back(Segment{SegmentKind::reason, step, ReasonStub{"reason:" + std::to_string(step)}});

    SelectRecord rec;
    rec.context = ContextState{task.context, history, step};
    rec.anchor = anchor_fn(rec.context, step);
    const auto dist = selection_distribution(rec.anchor, lib, pool, gamma);
    rec.chosen = sample_tool(dist, derive_seed(seed, static_cast<std::uint64_t>(step)), mode);
    rec.log_prob = dist.log_probs[dist.index_of(rec.chosen)];
    rec.pool = dist.ids;
    rec.probs = dist.probs;
    traj.total_log_prob += rec.log_prob;
    traj.selection_indices.push_back(traj.segments.size());
    const ToolId chosen = rec.chosen;
    traj.segments.push_back(Segment{SegmentKind::select, step, std::move(rec)});

    ToolFeedback fb = execute_tool(task, step, chosen);
    traj.final_correct = traj.final_correct && fb.correct;
    const auto e = lib.embedding_vector(chosen);
    for (std::size_t i = 0; i < lib.dim(); ++i) {
      history_sum[i] += e[i] + (fb.correct ? 0.0 : kFeedbackPenalty * penalty[i]);
      history[i] = history_sum[i] / static_cast<double>(step + 1);
    }
    traj.segments.push_back(Segment{SegmentKind::integrate, step, std::move(fb)});
  }
  return traj;
}

}  // namespace

std::string_view to_string(SegmentKind k) noexcept {
  switch (k) {
    case SegmentKind::reason: return "reason";
    case SegmentKind::select: return "select";
    case SegmentKind::integrate: return "integrate";
  }
  return "reason";
}

Vec feedback_penalty_direction(const ToolLibrary& lib) {
  Rng rng(derive_seed(lib.seed(), "feedback-penalty"));
  Vec v(lib.dim());
  for (double& x : v) x = rng.normal();
  return normalized(v);
}

Trajectory generate_trajectory(const PolicyParams& params, const Task& task, const ToolLibrary& lib,
                               std::span<const ToolId> pool, SelectMode mode, std::uint64_t seed) {
  validate(params);
  if (params.dim != lib.dim()) throw ContractViolation("generate_trajectory: params/library dimension mismatch");
  return run([&](const ContextState& ctx, std::size_t) { return predict_anchor(params, ctx); }, params.gamma, task,
             lib, pool, mode, seed);
}

Trajectory generate_oracle_trajectory(const Task& task, const ToolLibrary& lib, std::span<const ToolId> pool,
                                      double gamma) {
  return run(
      [&](const ContextState&, std::size_t step) {
        const auto e = lib.embedding_vector(task.subgoals[step].truth_tool_id);
        return Vec(e.begin(), e.end());
      },
      gamma, task, lib, pool, SelectMode::greedy, 0);
}

RolloutSet collect_rollouts(const PolicyParams& params, const Task& task, const ToolLibrary& lib,
                            std::span<const ToolId> pool, std::size_t n, std::uint64_t seed, SelectMode mode,
                            std::size_t threads) {
  if (n < 2) throw ContractViolation("collect_rollouts: ranking needs at least two rollouts");
  RolloutSet set;
  set.task_id = task.task_id;
  set.seed = seed;
  set.trajectories.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    set.trajectories[i] = generate_trajectory(params, task, lib, pool, mode, seed ^ static_cast<std::uint64_t>(i));
  });
  return set;
}

void check_structure(const Trajectory& traj) {
  const std::size_t steps = traj.selection_indices.size();
  if (traj.segments.size() != 3 * steps) throw ContractViolation("trajectory: segment count is not 3 per step");
  constexpr SegmentKind cycle[] = {SegmentKind::reason, SegmentKind::select, SegmentKind::integrate};
  double total = 0.0;
  for (std::size_t i = 0; i < traj.segments.size(); ++i) {
    const Segment& s = traj.segments[i];
    if (s.kind != cycle[i % 3] || s.step_index != i / 3) {
      throw ContractViolation("trajectory: segment " + std::to_string(i) + " breaks reason/select/integrate order");
    }
    const bool payload_ok = (s.kind == SegmentKind::reason && std::holds_alternative<ReasonStub>(s.payload)) ||
                            (s.kind == SegmentKind::select && std::holds_alternative<SelectRecord>(s.payload)) ||
                            (s.kind == SegmentKind::integrate && std::holds_alternative<ToolFeedback>(s.payload));
    if (!payload_ok) throw ContractViolation("trajectory: payload does not match segment kind");
    if (s.kind != SegmentKind::select) continue;
    if (traj.selection_indices[i / 3] != i) throw ContractViolation("trajectory: selection index mismatch");
    const SelectRecord& r = s.select();
    if (r.log_prob > 0.0) throw ContractViolation("trajectory: positive selection log-prob");
    std::size_t k = 0;
    while (k < r.pool.size() && r.pool[k] != r.chosen) ++k;
    if (k == r.pool.size() || r.probs.size() != r.pool.size()) {
      throw ContractViolation("trajectory: chosen tool missing from stored pool");
    }
    if (std::abs(std::exp(r.log_prob) - r.probs[k]) > 1e-12) {
      throw ContractViolation("trajectory: log-prob disagrees with stored distribution");
    }
    total += r.log_prob;
  }
  if (std::abs(total - traj.total_log_prob) > 1e-10) {
    throw ContractViolation("trajectory: total log-prob is not the sum over selection steps");
  }
}

nlohmann::ordered_json trajectory_to_json(const Trajectory& traj) {
  nlohmann::ordered_json j;
  j["task_id"] = traj.task_id;
  j["seed"] = traj.seed;
  auto segs = nlohmann::ordered_json::array();
  for (const Segment& s : traj.segments) {
    nlohmann::ordered_json o;
    o["kind"] = to_string(s.kind);
    o["step"] = s.step_index;
    if (s.kind == SegmentKind::reason) {
      o["token"] = std::get<ReasonStub>(s.payload).token;
    } else if (s.kind == SegmentKind::select) {
      const auto& r = s.select();
      o["context"] = r.context.task_context;
      o["history"] = r.context.history_summary;
      o["anchor"] = r.anchor;
      auto pool = nlohmann::ordered_json::array();
      for (ToolId id : r.pool) pool.push_back(id_value(id));
      o["pool"] = std::move(pool);
      o["chosen"] = id_value(r.chosen);
      o["log_prob"] = r.log_prob;
      o["probs"] = r.probs;
    } else {
      o["correct"] = s.feedback().correct;
      o["payload"] = s.feedback().payload;
    }
    segs.push_back(std::move(o));
  }
  j["segments"] = std::move(segs);
  j["selection_indices"] = traj.selection_indices;
  j["total_log_prob"] = traj.total_log_prob;
  j["final_correct"] = traj.final_correct;
  return j;
}

void write_rollouts_jsonl(std::ostream& out, const RolloutSet& set) {
  for (const Trajectory& t : set.trajectories) out << trajectory_to_json(t).dump() << '\n';
}

std::uint64_t rollout_digest(const RolloutSet& set) {
  std::ostringstream out;
  write_rollouts_jsonl(out, set);
  return fnv1a(out.str());
}

}  // namespace autotool

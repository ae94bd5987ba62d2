#include <sstream>

#include "autotool/errors.hpp"
#include "autotool/reward.hpp"
#include "doctest.h"

using namespace autotool;

namespace {

struct Fixture {
  ToolLibrary lib = build_library(synthesize_tool_specs(10, 7), 1.0, 7);
  Task task = generate_task(lib, 3, PoolKind::full, 0);
  PolicyParams params = init_params(8, 1.0, 3);
};

SelectRecord& select_at(Trajectory& t, std::size_t step) {
  return std::get<SelectRecord>(t.segments[t.selection_indices[step]].payload);
}

}  // namespace

TEST_CASE("oracle trajectory scores 2 per step") {
  Fixture f;
  const auto t = generate_oracle_trajectory(f.task, f.lib, f.task.allowed_tools, 1.0);
  for (AccMode mode : {AccMode::per_step, AccMode::final_answer}) {
    const auto r = score_trajectory(t, f.task, f.lib, RewardConfig{mode});
    for (const auto& s : r.per_step) {
      CHECK(s.prm == 1.0);
      CHECK(s.acc == 1.0);
      CHECK(s.total == 2.0);
    }
    CHECK(r.r_total == 2.0);
  }
}

TEST_CASE("orthogonal anchor with the wrong tool scores 0.5") {
  Fixture f;
  auto t = generate_oracle_trajectory(f.task, f.lib, f.task.allowed_tools, 1.0);
  const ToolId truth = f.task.subgoals[0].truth_tool_id;
  const auto e = f.lib.embedding_vector(truth);
  // Gram-Schmidt a second direction against the truth embedding.
  Vec v(8, 0.0);
  v[0] = 1.0;
  const double p = dot(v, e);
  for (std::size_t i = 0; i < 8; ++i) v[i] -= p * e[i];
  select_at(t, 0).anchor = v;
  select_at(t, 0).chosen = truth == ToolId{0} ? ToolId{1} : ToolId{0};
  const auto s = score_step(t, t.selection_indices[0], f.task, f.lib);
  CHECK(s.prm == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.acc == 0.0);
  CHECK(s.total == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("golden rewards: seed 5 trajectory") {
  Fixture f;
  const auto t = generate_trajectory(f.params, f.task, f.lib, f.task.allowed_tools, SelectMode::sample, 5);
  const auto r = score_trajectory(t, f.task, f.lib);
  const double prm[] = {0.31602507917544848, 0.49079963518856257, 0.42295771339788379};
  for (std::size_t i = 0; i < 3; ++i) {
    // Oracle: the cosine formula evaluated directly.
    const auto& rec = t.selection(i);
    const auto e = f.lib.embedding_vector(f.task.subgoals[i].truth_tool_id);
    const double cos = dot(rec.anchor, e) / (norm(rec.anchor) * norm(e));
    CHECK(r.per_step[i].prm == doctest::Approx((1 + cos) / 2).epsilon(1e-14));
    CHECK(r.per_step[i].prm == prm[i]);
    CHECK(r.per_step[i].acc == 0.0);
    CHECK(r.per_step[i].total == r.per_step[i].prm + r.per_step[i].acc);
  }
  CHECK(r.r_total == 0.40992747592063167);
  CHECK(std::abs(r.r_total - (prm[0] + prm[1] + prm[2]) / 3) < 1e-12);
}

TEST_CASE("acc modes differ only through final correctness") {
  Fixture f;
  auto t = generate_oracle_trajectory(f.task, f.lib, f.task.allowed_tools, 1.0);
  const ToolId truth = f.task.subgoals[2].truth_tool_id;
  select_at(t, 2).chosen = truth == ToolId{0} ? ToolId{1} : ToolId{0};
  t.final_correct = false;
  const auto per_step = score_trajectory(t, f.task, f.lib, RewardConfig{AccMode::per_step});
  const auto final_answer = score_trajectory(t, f.task, f.lib, RewardConfig{AccMode::final_answer});
  CHECK(per_step.per_step[0].acc == 1.0);
  CHECK(final_answer.per_step[0].acc == 0.0);
  CHECK(per_step.per_step[2].acc == 0.0);
  // Two of three steps at 2.0, the last at prm 1.0 with acc 0.
  CHECK(per_step.r_total == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("fixing a wrong step never lowers the reward") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 8, 21);
  for (auto t : set.trajectories) {
    for (std::size_t i = 0; i < t.selection_count(); ++i) {
      const double before = score_trajectory(t, f.task, f.lib).r_total;
      auto fixed = t;
      select_at(fixed, i).chosen = f.task.subgoals[i].truth_tool_id;
      bool all = true;
      for (std::size_t k = 0; k < fixed.selection_count(); ++k) {
        all = all && fixed.selection(k).chosen == f.task.subgoals[k].truth_tool_id;
      }
      fixed.final_correct = all;
      for (AccMode mode : {AccMode::per_step, AccMode::final_answer}) {
        CHECK(score_trajectory(fixed, f.task, f.lib, {mode}).r_total >=
              score_trajectory(t, f.task, f.lib, {mode}).r_total);
      }
      CHECK(before >= 0.0);
      CHECK(before <= 2.0);
    }
  }
}

TEST_CASE("scores ignore reason and integrate content") {
  Fixture f;
  auto t = generate_trajectory(f.params, f.task, f.lib, f.task.allowed_tools, SelectMode::sample, 5);
  const double base = score_trajectory(t, f.task, f.lib).r_total;
  std::get<ReasonStub>(t.segments[0].payload).token = "something else";
  std::get<ToolFeedback>(t.segments[2].payload).payload = "garbage";
  CHECK(score_trajectory(t, f.task, f.lib).r_total == base);
}

TEST_CASE("score_step rejects non-selection segments") {
  Fixture f;
  const auto t = generate_trajectory(f.params, f.task, f.lib, f.task.allowed_tools, SelectMode::sample, 5);
  CHECK_THROWS_AS(score_step(t, 0, f.task, f.lib), ContractViolation);
  CHECK_THROWS_AS(score_step(t, 2, f.task, f.lib), ContractViolation);
  CHECK_THROWS_AS(score_step(t, 99, f.task, f.lib), ContractViolation);
  CHECK_THROWS_AS(score_trajectory(Trajectory{}, f.task, f.lib), ContractViolation);
}

TEST_CASE("scored JSONL embeds rewards") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 3, 1);
  const auto rewards = score_rollouts(set, f.task, f.lib);
  std::stringstream ss;
  write_scored_rollouts_jsonl(ss, set, rewards);
  std::string line;
  std::getline(ss, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("rewards").at("r_total").get<double>() == rewards[0].r_total);
  CHECK(j.at("rewards").at("per_step").size() == 3);
}

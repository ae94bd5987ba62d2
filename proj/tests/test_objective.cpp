#include <cmath>

#include "autotool/errors.hpp"
#include "autotool/objective.hpp"
#include "autotool/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace autotool;

namespace {

struct Fixture {
  ToolLibrary lib = build_library(synthesize_tool_specs(10, 7), 1.0, 7);
  Task task = generate_task(lib, 3, PoolKind::full, 0);
  PolicyParams params = init_params(8, 1.0, 3);
};

}  // namespace

TEST_CASE("optimal weights") {
  const auto w = optimal_weights(Vec{0.0, 0.0}, Vec{1.0, 0.0}, 1.0);
  CHECK(w.weights[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(w.weights[1] == doctest::Approx(0.268941).epsilon(1e-6));

  const Vec old = {-1.0, -3.0, -0.5};
  const auto same = optimal_weights(old, Vec(3, 1.2), 0.3);
  CHECK(max_abs_diff(same.weights, softmax(old)) < 1e-15);

  const auto flat = optimal_weights(Vec(4, -2.0), Vec{2.0, 0.0, 1.0, 0.5}, 1e6);
  for (double x : flat.weights) CHECK(std::abs(x - 0.25) < 1e-5);

  CHECK_THROWS_AS(optimal_weights(old, Vec(3, 0.0), 0.0), ContractViolation);
  CHECK_THROWS_AS(optimal_weights(old, Vec(2, 0.0), 1.0), ContractViolation);
}

TEST_CASE("identical trajectories give ce = log 2") {
  Fixture f;
  RolloutSet set;
  const auto t = generate_trajectory(f.params, f.task, f.lib, f.task.allowed_tools, SelectMode::sample, 3);
  set.trajectories = {t, t};
  const auto rep = ce_loss(init_params(8, 1.0, 8), set, f.lib, OptimalWeights{{0.7, 0.3}, 1.0});
  CHECK(rep.ce == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("ce matches the long-double oracle and the frozen golden") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 8, 5);
  const auto R = reward_totals(score_rollouts(set, f.task, f.lib));
  Vec old;
  for (const auto& t : set.trajectories) old.push_back(t.total_log_prob);
  const auto w = optimal_weights(old, R, 1.0);
  const auto p2 = init_params(8, 1.0, 4);
  const auto rep = ce_loss(p2, f.params, set, f.lib, w);
  CHECK(rep.ce == doctest::Approx(double(oracle::ce(p2, set, f.lib, w.weights))).epsilon(1e-13));
  CHECK(rep.ce == 2.2021223373090963);
  CHECK(rep.kl_to_old == 0.031474181073268943);
  CHECK(rep.grad_norm == 2.5057261914283373);
  CHECK(fnv1a(nlohmann::json(rep.grad).dump()) == 0xa340f1d809e7b874ULL);
  CHECK(rep.ce >= rep.entropy - 1e-9);
}

TEST_CASE("analytic gradient matches central differences") {
  const auto lib = build_library(synthesize_tool_specs(16, 2), 1.0, 2);
  for (std::uint64_t k = 0; k < 4; ++k) {
    const auto task = generate_task(lib, 2 + k % 3, PoolKind::full, k);
    const auto old = init_params(8, 1.5, 100 + k);
    const auto cur = init_params(8, 1.5, 200 + k);
    const auto set = collect_rollouts(old, task, lib, task.allowed_tools, 4 + k, k);
    const auto w = optimal_weights(replay_log_probs(old, set, lib), reward_totals(score_rollouts(set, task, lib)), 0.5);
    const auto rep = ce_loss(cur, set, lib, w);
    const auto fd = oracle::ce_gradient_fd(cur, set, lib, w.weights, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      if (std::abs(rep.grad[i]) <= 1e-8) continue;
      const double rel = std::abs(rep.grad[i] - fd[i]) / std::max(std::abs(rep.grad[i]), std::abs(fd[i]));
      CHECK(rel < 1e-5);
    }
  }
}

TEST_CASE("ce minimum: softmax(ell) equal to the weights") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 5, 9);
  const Vec ell = replay_log_probs(f.params, set, f.lib);
  const auto w = OptimalWeights{softmax(ell), 1.0};
  const auto rep = ce_loss(f.params, set, f.lib, w);
  CHECK(rep.ce == doctest::Approx(entropy(w.weights)).epsilon(1e-12));
  CHECK(rep.grad_norm <= 1e-8);
}

TEST_CASE("kl_to_old") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 6, 2);
  CHECK(std::abs(kl_to_old(f.params, f.params, set, f.lib)) <= 1e-12);
  for (std::uint64_t s = 0; s < 10; ++s) CHECK(kl_to_old(init_params(8, 1.0, s), f.params, set, f.lib) >= -1e-12);
  CHECK_THROWS_AS(kl_to_old(init_params(4, 1.0, 1), f.params, set, f.lib), ContractViolation);
}

TEST_CASE("mismatched weights are rejected") {
  Fixture f;
  const auto set = collect_rollouts(f.params, f.task, f.lib, f.task.allowed_tools, 4, 2);
  CHECK_THROWS_AS(ce_loss(f.params, set, f.lib, OptimalWeights{{0.5, 0.5}, 1.0}), ContractViolation);
}

TEST_CASE("simplex minimization recovers the weights") {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    Vec z(4);
    for (double& x : z) x = 2.0 * rng.normal();
    const Vec w = softmax(z);
    const auto sol = minimize_ce_on_simplex(w);
    CHECK(max_abs_diff(sol.q, w) <= 1e-6);
    CHECK(sol.ce >= entropy(w) - 1e-12);
  }
  const Vec proj = project_to_simplex(Vec{0.5, 2.0, -1.0});
  CHECK(proj == Vec{0.0, 1.0, 0.0});
}

TEST_CASE("greedy evaluation counts seen and unseen truth steps") {
  const auto lib = build_library(synthesize_tool_specs(20, 1), 0.5, 1);
  std::vector<Task> tasks;
  for (std::uint64_t s = 0; s < 20; ++s) tasks.push_back(generate_task(lib, 2, PoolKind::full, s));
  const auto r = evaluate_greedy(init_params(8, 1.0, 1), lib, tasks);
  CHECK(r.steps == 40);
  CHECK(r.seen_steps + r.unseen_steps == 40);
  std::size_t n = 0;
  for (const auto& [key, count] : r.confusion) n += count;
  CHECK(n == 40);
  const auto threaded = evaluate_greedy(init_params(8, 1.0, 1), lib, tasks, {}, 3);
  CHECK(threaded.correct == r.correct);
  CHECK(threaded.mean_reward == r.mean_reward);
}

TEST_CASE("train: zero learning rate keeps params and a flat trace") {
  const auto lib = build_library(synthesize_tool_specs(20, 1), 0.5, 1);
  std::vector<Task> tasks;
  for (std::uint64_t s = 0; s < 10; ++s) tasks.push_back(generate_task(lib, 2, PoolKind::seen_only, s));
  const auto init = init_params(8, 1.0, 1);
  TrainConfig c;
  c.learning_rate = 0.0;
  c.epochs = 2;
  const auto trace = train(init, lib, tasks, tasks, tasks, c);
  CHECK(trace.params.flat() == init.flat());
  REQUIRE(trace.epochs.size() == 2);
  const auto& a = trace.epochs[0];
  const auto& b = trace.epochs[1];
  CHECK(a.mean_reward == b.mean_reward);
  CHECK(a.acc_seen == b.acc_seen);
  CHECK(a.ce == b.ce);
  CHECK(a.kl == 0.0);
  CHECK(a.grad_norm == b.grad_norm);
}

TEST_CASE("train is independent of the thread count") {
  const auto lib = build_library(synthesize_tool_specs(20, 1), 0.5, 1);
  std::vector<Task> tasks;
  for (std::uint64_t s = 0; s < 12; ++s) tasks.push_back(generate_task(lib, 2, PoolKind::seen_only, s));
  TrainConfig c;
  c.epochs = 2;
  const auto one = train(init_params(8, 1.0, 1), lib, tasks, tasks, tasks, c);
  c.threads = 3;
  const auto three = train(init_params(8, 1.0, 1), lib, tasks, tasks, tasks, c);
  CHECK(one.params.flat() == three.params.flat());
  CHECK(one.epochs.back().ce == three.epochs.back().ce);
}

TEST_CASE("train reports divergence") {
  const auto lib = build_library(synthesize_tool_specs(20, 1), 0.5, 1);
  std::vector<Task> tasks;
  for (std::uint64_t s = 0; s < 10; ++s) tasks.push_back(generate_task(lib, 2, PoolKind::seen_only, s));
  TrainConfig c;
  c.learning_rate = 1e306;
  CHECK_THROWS_AS(train(init_params(8, 1.0, 1), lib, tasks, tasks, tasks, c), DivergenceError);
  c.learning_rate = 0.1;
  c.rollouts = 1;
  CHECK_THROWS_AS(train(init_params(8, 1.0, 1), lib, tasks, tasks, tasks, c), ContractViolation);
}

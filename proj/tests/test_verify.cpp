#include <cmath>

#include "autotool/errors.hpp"
#include "autotool/rng.hpp"
#include "autotool/verify.hpp"
#include "doctest.h"

using namespace autotool;

TEST_CASE("shift invariance") {
  CHECK(check_shift_invariance(Vec{0.0, 1.0, 2.0}, 0.0));
  CHECK(check_shift_invariance(Vec{0.0, 1.0, 2.0}, 100.0));
  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    Vec z(2 + rng.below(10));
    for (double& x : z) x = 3.0 * rng.normal();
    CHECK(check_shift_invariance(z, rng.uniform(-100, 100)));
  }
  CHECK_THROWS_AS(check_shift_invariance(Vec{1.0}, 1.0), ContractViolation);
  CHECK_THROWS_AS(check_shift_invariance(Vec{1.0, INFINITY}, 1.0), ContractViolation);
}

TEST_CASE("forward check: identical and shifted score vectors") {
  const Vec lp = {-1.0, -2.0, -0.5, -3.0};
  const Vec old = {-1.2, -1.9, -0.7, -2.5};
  const Vec r = {1.0, 0.5, 1.5, 0.2};
  const auto a = check_prop1_forward(lp, old, r, 0.5);
  CHECK(a.pass);
  CHECK(a.max_pl_gap <= 1e-9);
  CHECK(a.max_policy_gap <= 1e-8);

  const auto pa = policy_induced_pl(lp, old, 0.5);
  CHECK(max_pl_gap(pa, pa) == 0.0);
  Vec shifted = lp;
  for (double& x : shifted) x += 2.0;
  CHECK(max_pl_gap(pa, policy_induced_pl(shifted, old, 0.5)) <= 1e-9);
}

TEST_CASE("forward check on rollouts, four trajectories") {
  const auto lib = build_library(synthesize_tool_specs(12, 3), 1.0, 3);
  const auto task = generate_task(lib, 2, PoolKind::full, 4);
  const auto old = init_params(8, 1.0, 10);
  const auto cur = init_params(8, 1.0, 11);
  const auto set = collect_rollouts(old, task, lib, task.allowed_tools, 4, 6);
  const auto R = reward_totals(score_rollouts(set, task, lib));
  const auto rep = check_prop1_forward(cur, old, set, lib, R, 0.1);
  CHECK(rep.direction == Direction::forward);
  CHECK(rep.pass);
  CHECK(rep.max_pl_gap <= 1e-9);
  CHECK(rep.max_policy_gap <= 1e-8);
  // Stable across runs.
  const auto again = check_prop1_forward(cur, old, set, lib, R, 0.1);
  CHECK(report_to_json(again).dump() == report_to_json(rep).dump());
}

TEST_CASE("reverse check: constant shift passes, perturbation is caught") {
  const Vec lp = {-1.0, -2.0, -0.5, -3.0, -1.7};
  const Vec old = {-1.2, -1.9, -0.7, -2.5, -2.0};
  const double beta = 0.5;
  Vec shifted = lp;
  for (double& x : shifted) x += 3.7 / beta;
  const auto ok = check_prop1_reverse(policy_induced_pl(lp, old, beta), policy_induced_pl(shifted, old, beta), old);
  CHECK(ok.pass);
  CHECK(ok.max_policy_gap <= 1e-8);
  CHECK_FALSE(ok.witness);

  Vec bumped = lp;
  bumped[3] += 0.1 / beta;
  const auto bad = check_prop1_reverse(policy_induced_pl(lp, old, beta), policy_induced_pl(bumped, old, beta), old);
  CHECK_FALSE(bad.pass);
  REQUIRE(bad.witness);
  CHECK((bad.witness->first == 3 || bad.witness->second == 3));
  CHECK(report_to_json(bad).at("witness").size() == 2);
}

TEST_CASE("reverse check preconditions") {
  const auto a = policy_induced_pl(Vec{0.0, 1.0}, Vec{0.0, 0.0}, 1.0);
  CHECK_THROWS_AS(check_prop1_reverse(a, reward_induced_pl(Vec{0.0, 1.0})), ContractViolation);
  CHECK_THROWS_AS(check_prop1_reverse(a, policy_induced_pl(Vec{0.0, 1.0, 2.0}, Vec(3, 0.0), 1.0)), ContractViolation);
  CHECK_THROWS_AS(check_prop1_forward(Vec(9, 0.0), Vec(9, 0.0), Vec(9, 0.0), 1.0), OracleCapError);
}

TEST_CASE("suite passes by default and fails under injected perturbation") {
  VerifyConfig c;
  c.instances = 30;
  c.shift_instances = 100;
  c.normalization_per_size = 5;
  const auto ok = run_verification_suite(c);
  CHECK(ok.pass);
  CHECK(ok.first_failure.empty());
  CHECK(ok.forward.size() == 30);
  for (const auto& r : ok.reverse_rejected) CHECK(r.witness);

  c.inject_perturbation = true;
  const auto bad = run_verification_suite(c);
  CHECK_FALSE(bad.pass);
  CHECK(bad.first_failure.find("witness") != std::string::npos);

  const auto j = suite_to_json(ok);
  CHECK(j.at("forward").size() == 30);
  CHECK(j.dump() == suite_to_json(run_verification_suite(VerifyConfig{c.seed, 30, 100, 5})).dump());
}

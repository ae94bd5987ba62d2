#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "autotool/experiment.hpp"
#include "autotool/rng.hpp"
#include "doctest.h"

using namespace autotool;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autotool_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig small_config(const std::string& name) {
  ExperimentConfig c;
  c.tool_count = 20;
  c.task_count = 20;
  c.eval_task_count = 10;
  c.epochs = 1;
  c.verify_instances = 10;
  c.output_dir = scratch_dir(name);
  return c;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.rollouts == 8);
  CHECK(c.epochs == 3);
  CHECK(c.seen_fraction == 0.342);
  CHECK(c.d == 8);
  CHECK(c.tool_count == 70);
  const auto lib = make_library(c);
  CHECK(lib.seen_ids().size() == 24);
  CHECK(lib.unseen_ids().size() == 46);
  CHECK(fnv1a(lib.to_json().dump(2) + "\n") == 0x4d3aaa7af203d113ULL);
}

TEST_CASE("config JSON: overrides, round-trip and rejection") {
  const auto c = config_from_json(nlohmann::json::parse(R"({"N": 4, "beta": 0.5, "acc_mode": "final_answer"})"));
  CHECK(c.rollouts == 4);
  CHECK(c.beta == 0.5);
  CHECK(c.acc_mode == AccMode::final_answer);
  CHECK(c.epochs == 3);
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back).dump() == config_to_json(c).dump());
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"nope": 1})")), ContractViolation);
  ExperimentConfig bad;
  bad.rollouts = 1;
  CHECK_THROWS_AS(validate(bad), ContractViolation);
  bad = {};
  bad.beta = 0.0;
  CHECK_THROWS_AS(validate(bad), ContractViolation);

  ExperimentConfig moved = c;
  moved.output_dir = "/elsewhere";
  moved.threads = 7;
  CHECK(config_digest(moved) == config_digest(c));
  moved.seed = 2;
  CHECK(config_digest(moved) != config_digest(c));
}

TEST_CASE("gen-tools is reproducible") {
  auto c = small_config("gen");
  const auto a = slurp(cmd_gen_tools(c));
  const auto b = slurp(cmd_gen_tools(c));
  CHECK(a == b);
  CHECK(load_library(c.output_dir / "library.json").size() == 20);
  CHECK(fs::exists(c.output_dir / "run_metadata.json"));
}

TEST_CASE("train requires a library") {
  auto c = small_config("nolib");
  CHECK_THROWS_AS(cmd_train(c), IoError);
}

TEST_CASE("train, eval and checkpoint round-trip") {
  auto c = small_config("train");
  cmd_gen_tools(c);
  const auto out = cmd_train(c);
  const std::string csv = slurp(c.output_dir / "trace.csv");
  CHECK(csv.rfind("epoch,mean_reward,acc_seen,acc_unseen,ce,kl,grad_norm\n1,", 0) == 0);
  CHECK(fnv1a(csv) == out.trace_digest);

  const auto [params, digest] = load_checkpoint(out.checkpoint);
  CHECK(params.flat() == out.trace.params.flat());
  CHECK(digest == config_digest(c));

  const auto seen = cmd_eval(c, out.checkpoint, PoolKind::seen_only);
  CHECK(seen.result.steps == 30);
  CHECK(seen.result.unseen_steps == 0);
  CHECK(seen.oracle_mean_reward == 2.0);
  const auto full = cmd_eval(c, out.checkpoint, PoolKind::full);
  bool has_unseen = false;
  const auto lib = load_library(c.output_dir / "library.json");
  for (const auto& row : full.report.at("confusion")) {
    has_unseen = has_unseen || !lib.is_seen(ToolId{row.at("truth").get<std::uint32_t>()});
  }
  CHECK(has_unseen);
  CHECK(fs::exists(c.output_dir / "eval_full.json"));

  std::ofstream(c.output_dir / "broken.json") << "{\"params\": 3";
  CHECK_THROWS_AS(cmd_eval(c, c.output_dir / "broken.json", PoolKind::full), IoError);
  std::ofstream(c.output_dir / "broken2.json") << "{\"config_digest\": \"00\", \"params\": {\"shape\": [8, 17]}}";
  CHECK_THROWS_AS(cmd_eval(c, c.output_dir / "broken2.json", PoolKind::full), IoError);
}

TEST_CASE("train with zero learning rate writes a flat trace") {
  auto c = small_config("flat");
  c.learning_rate = 0.0;
  c.epochs = 3;
  cmd_gen_tools(c);
  const auto out = cmd_train(c);
  for (const auto& m : out.trace.epochs) {
    CHECK(m.acc_seen == out.trace.epochs[0].acc_seen);
    CHECK(m.ce == out.trace.epochs[0].ce);
  }
}

TEST_CASE("untrained chance baseline with 20 seen tools") {
  ExperimentConfig c;
  c.tool_count = 40;
  c.seen_fraction = 0.5;
  c.eval_task_count = 200;
  const auto lib = make_library(c);
  REQUIRE(lib.seen_ids().size() == 20);
  const auto tasks = make_eval_tasks(lib, c, PoolKind::seen_only);
  const auto r = evaluate_greedy(init_params(c.d, c.gamma, c.seed), lib, tasks);
  CHECK(r.steps >= 500);
  CHECK(std::abs(r.accuracy() - 1.0 / 20.0) <= 0.05);
}

TEST_CASE("verify writes a stable report") {
  auto c = small_config("verify");
  const auto s = cmd_verify(c);
  CHECK(s.pass);
  const auto first = slurp(c.output_dir / "verify_report.json");
  cmd_verify(c);
  CHECK(slurp(c.output_dir / "verify_report.json") == first);
  CHECK_FALSE(cmd_verify(c, true).pass);
}

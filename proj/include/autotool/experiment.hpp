#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "autotool/objective.hpp"
#include "autotool/taskgen.hpp"
#include "autotool/verify.hpp"
#include "json.hpp"

namespace autotool {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t d = kDefaultDim;
  std::size_t tool_count = 70;
  double seen_fraction = 0.342;
  std::size_t task_count = 200;
  std::size_t task_length = 3;
  std::size_t rollouts = kDefaultRollouts;
  double beta = 0.1;
  double gamma = kDefaultGamma;
  double learning_rate = 0.1;
  std::size_t epochs = 3;
  std::size_t eval_task_count = 200;
  std::size_t verify_instances = 200;
  AccMode acc_mode = AccMode::per_step;
  double prm_weight = 1.0;
  double acc_weight = 1.0;
  double task_margin = 0.2;
  double task_drift = 3.0;
  std::filesystem::path output_dir = "autotool_out";
  std::size_t threads = 1;
};

/// Throws ContractViolation on out-of-range fields.
void validate(const ExperimentConfig& c);

nlohmann::ordered_json config_to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// FNV-1a over the config JSON without output_dir and threads, which never
/// change results.
std::uint64_t config_digest(const ExperimentConfig& c);

/// Seeded experiment inputs, rebuilt identically from the config.
std::vector<Task> make_train_tasks(const ToolLibrary& lib, const ExperimentConfig& c);
std::vector<Task> make_eval_tasks(const ToolLibrary& lib, const ExperimentConfig& c, PoolKind pool);
ToolLibrary make_library(const ExperimentConfig& c);

std::string trace_to_csv(const TrainingTrace& trace);
std::string format_double(double x);
std::string hex64(std::uint64_t x);

ToolLibrary load_library(const std::filesystem::path& path);
/// Params and the config digest they were trained under.
std::pair<PolicyParams, std::uint64_t> load_checkpoint(const std::filesystem::path& path);

std::filesystem::path cmd_gen_tools(const ExperimentConfig& c);

struct TrainOutcome {
  TrainingTrace trace;
  std::uint64_t trace_digest = 0;
  std::filesystem::path checkpoint;
};
/// Reads <output_dir>/library.json. Writes trace.csv, checkpoint.json,
/// run_metadata.json. On divergence writes divergence_dump.json and rethrows.
TrainOutcome cmd_train(const ExperimentConfig& c);

struct EvalOutcome {
  EvalResult result;
  double oracle_mean_reward = 0.0;
  nlohmann::ordered_json report;
};
/// Greedy evaluation on the seeded held-out tasks of `pool`; writes eval_<pool>.json.
EvalOutcome cmd_eval(const ExperimentConfig& c, const std::filesystem::path& checkpoint, PoolKind pool);

/// Writes verify_report.json.
SuiteReport cmd_verify(const ExperimentConfig& c, bool inject_perturbation = false);

}  // namespace autotool

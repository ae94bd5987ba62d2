#include "autotool/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "autotool/rng.hpp"

namespace autotool {
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json parse_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_metadata(const ExperimentConfig& c, const std::string& command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["finished_utc"] = utc_now();
  j["config_digest"] = hex64(config_digest(c));
  j["threads"] = c.threads;
  write_file(c.output_dir / "run_metadata.json", j.dump(2) + "\n");
}

TaskGenOptions task_options(const ExperimentConfig& c) {
  TaskGenOptions o;
  o.min_margin = c.task_margin;
  o.drift = c.task_drift;
  return o;
}

RewardConfig reward_config(const ExperimentConfig& c) {
  return RewardConfig{c.acc_mode, c.prm_weight, c.acc_weight};
}

std::vector<Task> make_tasks(const ToolLibrary& lib, const ExperimentConfig& c, PoolKind pool, std::size_t count,
                             std::string_view stream) {
  const auto ids = pool_ids(lib, pool);
  const std::uint64_t root = derive_seed(c.seed, stream);
  std::vector<Task> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(generate_task(lib, c.task_length, ids, derive_seed(root, static_cast<std::uint64_t>(k)),
                                task_options(c)));
  }
  return out;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ContractViolation(std::string(name) + " must be positive");
  };
  positive(c.beta, "beta");
  positive(c.gamma, "gamma");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw ContractViolation("learning_rate must be finite and >= 0");
  }
  if (c.rollouts < 2) throw ContractViolation("N (rollouts) must be >= 2");
  if (c.epochs < 1) throw ContractViolation("epochs must be >= 1");
  if (c.d < 2) throw ContractViolation("d must be >= 2");
  if (c.tool_count < 2) throw ContractViolation("tool_count must be >= 2");
  if (!(c.seen_fraction > 0.0 && c.seen_fraction <= 1.0)) throw ContractViolation("seen_fraction must be in (0, 1]");
  if (c.task_length < 1 || c.task_length > kMaxTaskLength) throw ContractViolation("task_length must be in [1, 6]");
  if (c.task_count < 1) throw ContractViolation("task_count must be >= 1");
  if (c.prm_weight < 0.0 || c.acc_weight < 0.0) throw ContractViolation("reward weights must be >= 0");
  if (c.task_margin < 0.0 || c.task_drift < 0.0) throw ContractViolation("task margin and drift must be >= 0");
  if (c.threads < 1) throw ContractViolation("threads must be >= 1");
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["d"] = c.d;
  j["tool_count"] = c.tool_count;
  j["seen_fraction"] = c.seen_fraction;
  j["task_count"] = c.task_count;
  j["task_length"] = c.task_length;
  j["N"] = c.rollouts;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["eval_task_count"] = c.eval_task_count;
  j["verify_instances"] = c.verify_instances;
  j["acc_mode"] = to_string(c.acc_mode);
  j["prm_weight"] = c.prm_weight;
  j["acc_weight"] = c.acc_weight;
  j["task_margin"] = c.task_margin;
  j["task_drift"] = c.task_drift;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ContractViolation("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "d") c.d = v.get<std::size_t>();
      else if (key == "tool_count") c.tool_count = v.get<std::size_t>();
      else if (key == "seen_fraction") c.seen_fraction = v.get<double>();
      else if (key == "task_count") c.task_count = v.get<std::size_t>();
      else if (key == "task_length") c.task_length = v.get<std::size_t>();
      else if (key == "N") c.rollouts = v.get<std::size_t>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "eval_task_count") c.eval_task_count = v.get<std::size_t>();
      else if (key == "verify_instances") c.verify_instances = v.get<std::size_t>();
      else if (key == "acc_mode") c.acc_mode = acc_mode_from_string(v.get<std::string>());
      else if (key == "prm_weight") c.prm_weight = v.get<double>();
      else if (key == "acc_weight") c.acc_weight = v.get<double>();
      else if (key == "task_margin") c.task_margin = v.get<double>();
      else if (key == "task_drift") c.task_drift = v.get<double>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "threads") c.threads = v.get<std::size_t>();
      else throw ContractViolation("unknown config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("bad config value: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, ExperimentConfig base) {
  return config_from_json(parse_json_file(path), std::move(base));
}

std::uint64_t config_digest(const ExperimentConfig& c) {
  auto j = config_to_json(c);
  j.erase("output_dir");
  j.erase("threads");
  return fnv1a(j.dump());
}

ToolLibrary make_library(const ExperimentConfig& c) {
  const std::uint64_t s = derive_seed(c.seed, "tools");
  return build_library(synthesize_tool_specs(c.tool_count, s), c.seen_fraction, s, c.d);
}

std::vector<Task> make_train_tasks(const ToolLibrary& lib, const ExperimentConfig& c) {
  return make_tasks(lib, c, PoolKind::seen_only, c.task_count, "tasks");
}

std::vector<Task> make_eval_tasks(const ToolLibrary& lib, const ExperimentConfig& c, PoolKind pool) {
  return make_tasks(lib, c, pool, c.eval_task_count, pool == PoolKind::seen_only ? "eval-seen" : "eval-full");
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hex64(std::uint64_t x) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string trace_to_csv(const TrainingTrace& trace) {
  std::string out = "epoch,mean_reward,acc_seen,acc_unseen,ce,kl,grad_norm\n";
  for (const auto& m : trace.epochs) {
    out += std::to_string(m.epoch);
    for (double v : {m.mean_reward, m.acc_seen, m.acc_unseen, m.ce, m.kl, m.grad_norm}) {
      out += ',' + format_double(v);
    }
    out += '\n';
  }
  return out;
}

ToolLibrary load_library(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("library not found: " + path.string() + " (run gen-tools first)");
  return ToolLibrary::from_json(parse_json_file(path));
}

std::pair<PolicyParams, std::uint64_t> load_checkpoint(const fs::path& path) {
  const auto j = parse_json_file(path);
  try {
    const std::string digest = j.at("config_digest").get<std::string>();
    return {params_from_json(j.at("params")), std::stoull(digest, nullptr, 16)};
  } catch (const std::exception& e) {
    throw IoError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

fs::path cmd_gen_tools(const ExperimentConfig& c) {
  validate(c);
  const fs::path path = c.output_dir / "library.json";
  write_file(path, make_library(c).to_json().dump(2) + "\n");
  write_metadata(c, "gen-tools");
  return path;
}

TrainOutcome cmd_train(const ExperimentConfig& c) {
  validate(c);
  const ToolLibrary lib = load_library(c.output_dir / "library.json");
  if (lib.dim() != c.d) throw IoError("library dimension does not match config d");
  const auto train_tasks = make_train_tasks(lib, c);
  const auto eval_seen = make_eval_tasks(lib, c, PoolKind::seen_only);
  const auto eval_full = make_eval_tasks(lib, c, PoolKind::full);

  TrainConfig tc;
  tc.rollouts = c.rollouts;
  tc.beta = c.beta;
  tc.learning_rate = c.learning_rate;
  tc.epochs = c.epochs;
  tc.seed = derive_seed(c.seed, "rollouts");
  tc.reward = reward_config(c);
  tc.threads = c.threads;

  TrainOutcome out;
  try {
    out.trace = train(init_params(c.d, c.gamma, c.seed), lib, train_tasks, eval_seen, eval_full, tc);
  } catch (const TrainingDiverged& e) {
    nlohmann::ordered_json dump;
    dump["error"] = e.what();
    dump["epoch"] = e.epoch;
    dump["task_index"] = e.task_index;
    dump["params"] = params_to_json(e.last_params);
    write_file(c.output_dir / "divergence_dump.json", dump.dump(2) + "\n");
    throw;
  }

  const std::string csv = trace_to_csv(out.trace);
  out.trace_digest = fnv1a(csv);
  write_file(c.output_dir / "trace.csv", csv);

  nlohmann::ordered_json ckpt;
  ckpt["config_digest"] = hex64(config_digest(c));
  ckpt["params"] = params_to_json(out.trace.params);
  out.checkpoint = c.output_dir / "checkpoint.json";
  write_file(out.checkpoint, ckpt.dump() + "\n");
  write_metadata(c, "train");
  return out;
}

EvalOutcome cmd_eval(const ExperimentConfig& c, const fs::path& checkpoint, PoolKind pool) {
  validate(c);
  const ToolLibrary lib = load_library(c.output_dir / "library.json");
  const auto [params, digest] = load_checkpoint(checkpoint);
  if (params.dim != lib.dim()) throw IoError("checkpoint dimension does not match the library");
  const auto tasks = make_eval_tasks(lib, c, pool);
  const RewardConfig rc = reward_config(c);

  EvalOutcome out;
  out.result = evaluate_greedy(params, lib, tasks, rc, c.threads);
  double oracle = 0.0;
  for (const Task& t : tasks) {
    oracle += score_trajectory(generate_oracle_trajectory(t, lib, t.allowed_tools, params.gamma), t, lib, rc).r_total;
  }
  out.oracle_mean_reward = tasks.empty() ? 0.0 : oracle / static_cast<double>(tasks.size());

  const EvalResult& r = out.result;
  auto& j = out.report;
  j["pool"] = to_string(pool);
  j["checkpoint_config_digest"] = hex64(digest);
  j["tasks"] = tasks.size();
  j["steps"] = r.steps;
  j["accuracy"] = r.accuracy();
  j["seen_steps"] = r.seen_steps;
  j["seen_accuracy"] = r.seen_accuracy();
  j["unseen_steps"] = r.unseen_steps;
  j["unseen_accuracy"] = r.unseen_accuracy();
  j["mean_reward"] = r.mean_reward;
  j["oracle_mean_reward"] = out.oracle_mean_reward;
  auto confusion = nlohmann::ordered_json::array();
  for (const auto& [key, count] : r.confusion) {
    confusion.push_back({{"truth", key.first}, {"chosen", key.second}, {"count", count}});
  }
  j["confusion"] = std::move(confusion);
  write_file(c.output_dir / ("eval_" + std::string(to_string(pool)) + ".json"), j.dump(2) + "\n");
  return out;
}

SuiteReport cmd_verify(const ExperimentConfig& c, bool inject_perturbation) {
  validate(c);
  VerifyConfig vc;
  vc.seed = c.seed;
  vc.instances = c.verify_instances;
  vc.beta = c.beta;
  vc.inject_perturbation = inject_perturbation;
  vc.threads = c.threads;
  SuiteReport s = run_verification_suite(vc);
  write_file(c.output_dir / "verify_report.json", suite_to_json(s).dump(2) + "\n");
  return s;
}

}  // namespace autotool

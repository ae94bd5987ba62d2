// autotool: generate a tool library, run Phase-II selection training,
// evaluate checkpoints and run the ranking-equivalence test bench.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "autotool/experiment.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> d, tool_count, task_count, task_length, rollouts, epochs, eval_task_count,
      verify_instances, threads;
  std::optional<double> seen_fraction, beta, gamma, learning_rate, task_margin, task_drift;
  std::optional<std::string> acc_mode, output_dir;
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "Flat JSON config file");
  app.add_option("--seed", o.seed, "Root seed");
  app.add_option("--d", o.d, "Embedding dimension");
  app.add_option("--tool-count", o.tool_count);
  app.add_option("--seen-fraction", o.seen_fraction);
  app.add_option("--task-count", o.task_count, "Training tasks");
  app.add_option("--task-length", o.task_length);
  app.add_option("-N,--rollouts", o.rollouts, "Rollouts per task");
  app.add_option("--beta", o.beta, "KL regularization strength");
  app.add_option("--gamma", o.gamma, "Selection distribution skewness");
  app.add_option("--lr,--learning-rate", o.learning_rate);
  app.add_option("--epochs", o.epochs);
  app.add_option("--eval-task-count", o.eval_task_count);
  app.add_option("--verify-instances", o.verify_instances);
  app.add_option("--acc-mode", o.acc_mode, "per_step or final_answer");
  app.add_option("--task-margin", o.task_margin);
  app.add_option("--task-drift", o.task_drift);
  app.add_option("-o,--output-dir", o.output_dir, "Overrides AUTOTOOL_OUTPUT_DIR and the config file");
  app.add_option("-j,--threads", o.threads, "Worker threads; results do not depend on it");
}

template <class T, class U>
void apply(const std::optional<T>& v, U& field) {
  if (v) field = *v;
}

// file < environment < flags
autotool::ExperimentConfig resolve(const Overrides& o) {
  autotool::ExperimentConfig c;
  if (!o.config_path.empty()) c = autotool::load_config(o.config_path);
  if (const char* env = std::getenv("AUTOTOOL_OUTPUT_DIR"); env && *env) c.output_dir = env;
  apply(o.seed, c.seed);
  apply(o.d, c.d);
  apply(o.tool_count, c.tool_count);
  apply(o.seen_fraction, c.seen_fraction);
  apply(o.task_count, c.task_count);
  apply(o.task_length, c.task_length);
  apply(o.rollouts, c.rollouts);
  apply(o.beta, c.beta);
  apply(o.gamma, c.gamma);
  apply(o.learning_rate, c.learning_rate);
  apply(o.epochs, c.epochs);
  apply(o.eval_task_count, c.eval_task_count);
  apply(o.verify_instances, c.verify_instances);
  apply(o.task_margin, c.task_margin);
  apply(o.task_drift, c.task_drift);
  apply(o.threads, c.threads);
  if (o.acc_mode) c.acc_mode = autotool::acc_mode_from_string(*o.acc_mode);
  if (o.output_dir) c.output_dir = *o.output_dir;
  autotool::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-anchored tool selection trained with the PL-equivalent CE objective"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen-tools", "Write <output_dir>/library.json");
  auto* tr = app.add_subcommand("train", "Train from <output_dir>/library.json; writes trace.csv and checkpoint.json");
  auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  auto* ver = app.add_subcommand("verify", "Shift-invariance, PL normalization and ranking-equivalence checks");
  for (auto* sub : {gen, tr, ev, ver}) add_common(*sub, o);

  std::string checkpoint;
  std::string pool = "seen_only";
  ev->add_option("--checkpoint", checkpoint, "Defaults to <output_dir>/checkpoint.json");
  ev->add_option("--pool", pool, "seen_only or full")->check(CLI::IsMember({"seen_only", "full"}));
  bool inject = false;
  ver->add_flag("--inject-perturbation", inject, "Perturb agreeing pairs; the suite must then fail");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(o);
    if (gen->parsed()) {
      const auto path = autotool::cmd_gen_tools(cfg);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (tr->parsed()) {
      const auto out = autotool::cmd_train(cfg);
      for (const auto& m : out.trace.epochs) {
        std::printf("epoch %zu  reward %.4f  acc_seen %.4f  acc_unseen %.4f  ce %.4f  kl %.5f\n", m.epoch,
                    m.mean_reward, m.acc_seen, m.acc_unseen, m.ce, m.kl);
      }
      if (!out.trace.objective_nondecreasing) {
        std::fprintf(stderr, "warning: E[R] - beta*KL decreased between epochs\n");
      }
      std::printf("trace digest %s\nwrote %s\n", autotool::hex64(out.trace_digest).c_str(),
                  out.checkpoint.string().c_str());
    } else if (ev->parsed()) {
      const auto path = checkpoint.empty() ? cfg.output_dir / "checkpoint.json" : std::filesystem::path(checkpoint);
      const auto out = autotool::cmd_eval(cfg, path, autotool::pool_from_string(pool));
      std::printf("%s\n", out.report.dump(2).c_str());
    } else if (ver->parsed()) {
      const auto s = autotool::cmd_verify(cfg, inject);
      if (!s.pass) {
        std::fprintf(stderr, "verify FAILED: %s\n", s.first_failure.c_str());
        return 3;
      }
      std::printf("verify passed (%zu forward, %zu reverse instances)\n", s.forward.size(), s.reverse.size());
    }
  } catch (const autotool::DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

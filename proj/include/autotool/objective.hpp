#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "autotool/errors.hpp"
#include "autotool/policy.hpp"
#include "autotool/reward.hpp"
#include "autotool/rollout.hpp"

namespace autotool {

struct OptimalWeights {
  Vec weights;
  double beta = 1.0;
};

/// softmax(old_log_probs + rewards / beta).
OptimalWeights optimal_weights(std::span<const double> old_log_probs, std::span<const double> rewards, double beta);

/// Shannon entropy in nats; 0 log 0 = 0.
double entropy(std::span<const double> p);

struct LossReport {
  double ce = 0.0;
  double entropy = 0.0;  // of the target weights; lower bound on ce
  double kl_to_old = 0.0;
  Vec grad;  // PolicyParams::flat() layout
  double grad_norm = 0.0;
};

/// Sum of selection log-probs per trajectory, recomputed from stored contexts and pools.
Vec replay_log_probs(const PolicyParams& params, const RolloutSet& rollouts, const ToolLibrary& lib);

/// -sum_t w_t log softmax(l_theta)_t with its analytic gradient. kl_to_old is left at 0.
LossReport ce_loss(const PolicyParams& params, const RolloutSet& rollouts, const ToolLibrary& lib,
                   const OptimalWeights& weights);
/// Same, with kl_to_old filled against `old_params`.
LossReport ce_loss(const PolicyParams& params, const PolicyParams& old_params, const RolloutSet& rollouts,
                   const ToolLibrary& lib, const OptimalWeights& weights);

/// Mean over selection steps of KL(pi_theta || pi_old) on the replayed contexts.
double kl_to_old(const PolicyParams& params, const PolicyParams& old_params, const RolloutSet& rollouts,
                 const ToolLibrary& lib);

struct SimplexSolution {
  Vec q;
  double ce = 0.0;
  std::size_t iterations = 0;
};

/// Minimizes -sum w log q over the probability simplex by projected gradient
/// descent with Armijo backtracking, starting from the uniform point.
SimplexSolution minimize_ce_on_simplex(std::span<const double> weights, std::size_t max_iterations = 200000);

/// Euclidean projection onto {q : q >= 0, sum q = 1}.
Vec project_to_simplex(std::span<const double> v);

struct EvalResult {
  std::size_t steps = 0;
  std::size_t correct = 0;
  std::size_t seen_steps = 0;
  std::size_t seen_correct = 0;
  std::size_t unseen_steps = 0;
  std::size_t unseen_correct = 0;
  double mean_reward = 0.0;
  /// (truth id, chosen id) -> count
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> confusion;

  double accuracy() const noexcept { return steps ? double(correct) / double(steps) : 0.0; }
  double seen_accuracy() const noexcept { return seen_steps ? double(seen_correct) / double(seen_steps) : 0.0; }
  double unseen_accuracy() const noexcept {
    return unseen_steps ? double(unseen_correct) / double(unseen_steps) : 0.0;
  }
};

/// Greedy rollouts over each task's own allowed pool; per-step accuracy split by
/// whether the truth tool is seen.
EvalResult evaluate_greedy(const PolicyParams& params, const ToolLibrary& lib, std::span<const Task> tasks,
                           const RewardConfig& reward = {}, std::size_t threads = 1);

struct TrainConfig {
  std::size_t rollouts = kDefaultRollouts;
  double beta = 0.1;
  double learning_rate = 0.1;
  std::size_t epochs = 3;
  /// Root of the rollout stream; task k draws from derive_seed(seed, k) every epoch.
  std::uint64_t seed = 1;
  RewardConfig reward;
  std::size_t threads = 1;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_reward = 0.0;  // over the epoch's rollouts
  double acc_seen = 0.0;     // greedy, held-out seen-pool tasks, after the epoch
  double acc_unseen = 0.0;   // greedy, full-pool tasks, steps whose truth is unseen
  double ce = 0.0;           // mean pre-update ce per task
  double kl = 0.0;           // end-of-epoch params vs snapshot, on the epoch's rollouts
  double grad_norm = 0.0;    // mean per-task gradient norm
  double objective = 0.0;    // mean_reward - beta * kl
};

struct TrainingTrace {
  std::vector<EpochMetrics> epochs;
  PolicyParams params;
  /// Whether mean_reward - beta * kl never dropped by more than 1e-3 between epochs.
  bool objective_nondecreasing = true;
};

class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, PolicyParams last_params, std::size_t epoch, std::size_t task_index)
      : DivergenceError(what), last_params(std::move(last_params)), epoch(epoch), task_index(task_index) {}

  PolicyParams last_params;
  std::size_t epoch;
  std::size_t task_index;
};

/// Phase-II loop. Each epoch snapshots pi_old, collects and scores rollouts for
/// every task in parallel from the snapshot, then applies one gradient step per
/// task in task order.
TrainingTrace train(PolicyParams params, const ToolLibrary& lib, std::span<const Task> train_tasks,
                    std::span<const Task> eval_seen_tasks, std::span<const Task> eval_full_tasks,
                    const TrainConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace autotool

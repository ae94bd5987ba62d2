#include "autotool/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "autotool/parallel.hpp"
#include "autotool/rng.hpp"

namespace autotool {
namespace {

struct Replay {
  double log_prob = 0.0;
  Vec grad;  // d log_prob / d flat params
};

Replay replay_trajectory(const PolicyParams& params, const Trajectory& traj, const ToolLibrary& lib,
                         bool with_grad) {
  Replay out;
  const std::size_t in = params.input_dim();
  if (with_grad) out.grad.assign(params.parameter_count(), 0.0);
  for (std::size_t idx : traj.selection_indices) {
    const SelectRecord& rec = traj.segments.at(idx).select();
    const Vec x = rec.context.flatten();
    const Vec anchor = predict_anchor(params, rec.context);
    const auto dist = selection_distribution(anchor, lib, rec.pool, params.gamma);
    out.log_prob += dist.log_probs[dist.index_of(rec.chosen)];
    if (!with_grad) continue;
    const Vec g = log_prob_anchor_gradient(dist, lib, rec.chosen, params.gamma);
    for (std::size_t r = 0; r < params.dim; ++r) {
      double* row = out.grad.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] += g[r] * x[c];
      out.grad[params.weights.size() + r] += g[r];
    }
  }
  return out;
}

void check_pair(const PolicyParams& a, const PolicyParams& b) {
  validate(a);
  validate(b);
  if (a.dim != b.dim) throw ContractViolation("parameter dimension mismatch");
}

double distribution_kl(std::span<const double> log_p, std::span<const double> log_q) {
  double kl = 0.0;
  for (std::size_t k = 0; k < log_p.size(); ++k) {
    const double p = std::exp(log_p[k]);
    if (p > 0.0) kl += p * (log_p[k] - log_q[k]);
  }
  return kl;
}

}  // namespace

OptimalWeights optimal_weights(std::span<const double> old_log_probs, std::span<const double> rewards, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ContractViolation("optimal_weights: beta must be positive");
  if (old_log_probs.size() != rewards.size()) throw ContractViolation("optimal_weights: length mismatch");
  if (old_log_probs.size() < 2) throw ContractViolation("optimal_weights: need at least two trajectories");
  if (!all_finite(old_log_probs) || !all_finite(rewards)) throw ContractViolation("optimal_weights: non-finite input");
  Vec z(rewards.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = old_log_probs[i] + rewards[i] / beta;
  return OptimalWeights{softmax(z), beta};
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

Vec replay_log_probs(const PolicyParams& params, const RolloutSet& rollouts, const ToolLibrary& lib) {
  validate(params);
  Vec out;
  out.reserve(rollouts.size());
  for (const Trajectory& t : rollouts.trajectories) out.push_back(replay_trajectory(params, t, lib, false).log_prob);
  return out;
}

LossReport ce_loss(const PolicyParams& params, const RolloutSet& rollouts, const ToolLibrary& lib,
                   const OptimalWeights& weights) {
  validate(params);
  const std::size_t n = rollouts.size();
  if (weights.weights.size() != n) throw ContractViolation("ce_loss: weights do not align with the rollout set");
  if (n < 2) throw ContractViolation("ce_loss: need at least two trajectories");

  std::vector<Replay> replays;
  replays.reserve(n);
  Vec ell(n);
  for (std::size_t t = 0; t < n; ++t) {
    replays.push_back(replay_trajectory(params, rollouts.trajectories[t], lib, true));
    ell[t] = replays.back().log_prob;
  }
  const Vec log_q = log_softmax(ell);

  LossReport rep;
  rep.entropy = entropy(weights.weights);
  rep.grad.assign(params.parameter_count(), 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double w = weights.weights[t];
    if (w > 0.0) rep.ce -= w * log_q[t];
    // d ce / d ell_t = q_t - w_t
    const double coef = std::exp(log_q[t]) - w;
    for (std::size_t k = 0; k < rep.grad.size(); ++k) rep.grad[k] += coef * replays[t].grad[k];
  }
  rep.grad_norm = norm(rep.grad);
  return rep;
}

LossReport ce_loss(const PolicyParams& params, const PolicyParams& old_params, const RolloutSet& rollouts,
                   const ToolLibrary& lib, const OptimalWeights& weights) {
  LossReport rep = ce_loss(params, rollouts, lib, weights);
  rep.kl_to_old = kl_to_old(params, old_params, rollouts, lib);
  return rep;
}

double kl_to_old(const PolicyParams& params, const PolicyParams& old_params, const RolloutSet& rollouts,
                 const ToolLibrary& lib) {
  check_pair(params, old_params);
  double sum = 0.0;
  std::size_t steps = 0;
  for (const Trajectory& traj : rollouts.trajectories) {
    for (std::size_t idx : traj.selection_indices) {
      const SelectRecord& rec = traj.segments.at(idx).select();
      for (ToolId id : rec.pool) {
        if (!lib.contains(id)) throw ContractViolation("kl_to_old: stored pool id not in library");
      }
      const auto p = selection_distribution(predict_anchor(params, rec.context), lib, rec.pool, params.gamma);
      const auto q =
          selection_distribution(predict_anchor(old_params, rec.context), lib, rec.pool, old_params.gamma);
      sum += distribution_kl(p.log_probs, q.log_probs);
      ++steps;
    }
  }
  return steps ? sum / static_cast<double>(steps) : 0.0;
}

Vec project_to_simplex(std::span<const double> v) {
  if (v.empty()) throw ContractViolation("project_to_simplex: empty vector");
  Vec u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

SimplexSolution minimize_ce_on_simplex(std::span<const double> weights, std::size_t max_iterations) {
  const std::size_t n = weights.size();
  if (n < 2) throw ContractViolation("minimize_ce_on_simplex: need at least two weights");
  auto f = [&](std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] == 0.0) continue;
      if (!(q[i] > 0.0)) return std::numeric_limits<double>::infinity();
      s -= weights[i] * std::log(q[i]);
    }
    return s;
  };

  SimplexSolution sol;
  sol.q.assign(n, 1.0 / static_cast<double>(n));
  sol.ce = f(sol.q);
  double step = 1.0;
  Vec grad(n);
  Vec trial(n);
  for (; sol.iterations < max_iterations; ++sol.iterations) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = -weights[i] / sol.q[i];
    bool accepted = false;
    double moved = 0.0;
    step = std::min(1.0, step * 4.0);
    while (step > 1e-300) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = sol.q[i] - step * grad[i];
      Vec next = project_to_simplex(trial);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += grad[i] * (next[i] - sol.q[i]);
      const double fn = f(next);
      if (fn <= sol.ce + 1e-4 * decrease) {
        moved = max_abs_diff(next, sol.q);
        sol.q = std::move(next);
        sol.ce = fn;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || moved < 1e-15) break;
  }
  return sol;
}

EvalResult evaluate_greedy(const PolicyParams& params, const ToolLibrary& lib, std::span<const Task> tasks,
                           const RewardConfig& reward, std::size_t threads) {
  std::vector<Trajectory> trajs(tasks.size());
  std::vector<double> rewards(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t k) {
    trajs[k] = generate_trajectory(params, tasks[k], lib, tasks[k].allowed_tools, SelectMode::greedy, 0);
    rewards[k] = score_trajectory(trajs[k], tasks[k], lib, reward).r_total;
  });

  EvalResult out;
  double reward_sum = 0.0;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    reward_sum += rewards[k];
    for (std::size_t s = 0; s < trajs[k].selection_count(); ++s) {
      const ToolId truth = tasks[k].subgoals[s].truth_tool_id;
      const ToolId chosen = trajs[k].selection(s).chosen;
      const bool ok = truth == chosen;
      ++out.steps;
      out.correct += ok;
      if (lib.is_seen(truth)) {
        ++out.seen_steps;
        out.seen_correct += ok;
      } else {
        ++out.unseen_steps;
        out.unseen_correct += ok;
      }
      ++out.confusion[{id_value(truth), id_value(chosen)}];
    }
  }
  out.mean_reward = tasks.empty() ? 0.0 : reward_sum / static_cast<double>(tasks.size());
  return out;
}

TrainingTrace train(PolicyParams params, const ToolLibrary& lib, std::span<const Task> train_tasks,
                    std::span<const Task> eval_seen_tasks, std::span<const Task> eval_full_tasks,
                    const TrainConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch) {
  validate(params);
  if (config.rollouts < 2) throw ContractViolation("train: rollouts per task must be >= 2");
  if (config.epochs < 1) throw ContractViolation("train: epochs must be >= 1");
  if (!(config.beta > 0.0)) throw ContractViolation("train: beta must be positive");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw ContractViolation("train: learning rate must be finite and non-negative");
  }
  if (train_tasks.empty()) throw ContractViolation("train: no training tasks");

  const std::size_t n_tasks = train_tasks.size();
  const double inv_tasks = 1.0 / static_cast<double>(n_tasks);
  TrainingTrace trace;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const PolicyParams snapshot = params;

    std::vector<RolloutSet> sets(n_tasks);
    std::vector<Vec> rewards(n_tasks);
    parallel_for(n_tasks, config.threads, [&](std::size_t k) {
      const Task& task = train_tasks[k];
      sets[k] = collect_rollouts(snapshot, task, lib, task.allowed_tools, config.rollouts,
                                 derive_seed(config.seed, static_cast<std::uint64_t>(k)));
      rewards[k] = reward_totals(score_rollouts(sets[k], task, lib, config.reward));
    });

    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t k = 0; k < n_tasks; ++k) {
      double r = 0.0;
      for (double x : rewards[k]) r += x;
      m.mean_reward += r / static_cast<double>(rewards[k].size()) * inv_tasks;

      Vec old_log_probs;
      for (const Trajectory& t : sets[k].trajectories) old_log_probs.push_back(t.total_log_prob);
      const auto weights = optimal_weights(old_log_probs, rewards[k], config.beta);
      const LossReport rep = ce_loss(params, sets[k], lib, weights);
      if (!std::isfinite(rep.ce) || !all_finite(rep.grad)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", task " + std::to_string(k) +
                                   " (ce=" + std::to_string(rep.ce) + ")",
                               params, epoch, k);
      }
      m.ce += rep.ce * inv_tasks;
      m.grad_norm += rep.grad_norm * inv_tasks;

      Vec flat = params.flat();
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= config.learning_rate * rep.grad[i];
      if (!all_finite(flat)) {
        throw TrainingDiverged("non-finite parameters after update at epoch " + std::to_string(epoch) + ", task " +
                                   std::to_string(k),
                               params, epoch, k);
      }
      params.assign_flat(flat);
    }

    Vec kls(n_tasks);
    parallel_for(n_tasks, config.threads, [&](std::size_t k) { kls[k] = kl_to_old(params, snapshot, sets[k], lib); });
    for (double kl : kls) m.kl += kl * inv_tasks;
    m.objective = m.mean_reward - config.beta * m.kl;

    m.acc_seen = evaluate_greedy(params, lib, eval_seen_tasks, config.reward, config.threads).accuracy();
    m.acc_unseen = evaluate_greedy(params, lib, eval_full_tasks, config.reward, config.threads).unseen_accuracy();

    if (!trace.epochs.empty() && m.objective < trace.epochs.back().objective - 1e-3) {
      trace.objective_nondecreasing = false;
    }
    trace.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  trace.params = std::move(params);
  return trace;
}

}  // namespace autotool

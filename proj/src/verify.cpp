#include "autotool/verify.hpp"

#include <algorithm>
#include <cmath>

#include "autotool/parallel.hpp"
#include "autotool/rng.hpp"
#include "autotool/taskgen.hpp"

namespace autotool {
namespace {

double logit(double m) { return std::log(m) - std::log1p(-m); }

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw ContractViolation(std::string(what) + ": non-finite input");
}

Vec random_vector(Rng& rng, std::size_t n, double scale) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::size_t random_size(Rng& rng, std::size_t max_items) { return 2 + rng.below(max_items - 1); }

struct ForwardFixture {
  ToolLibrary lib;
  std::vector<Task> tasks;
};

ForwardFixture forward_fixture(std::uint64_t seed) {
  ForwardFixture f;
  f.lib = build_library(synthesize_tool_specs(12, derive_seed(seed, "verify-tools")), 1.0,
                        derive_seed(seed, "verify-library"));
  const auto pool = pool_ids(f.lib, PoolKind::full);
  for (std::uint64_t k = 0; k < 8; ++k) {
    f.tasks.push_back(generate_task(f.lib, 2, pool, derive_seed(seed, 100 + k)));
  }
  return f;
}

PolicyParams scaled_params(std::size_t dim, std::uint64_t seed, double scale) {
  PolicyParams p = init_params(dim, 1.0, seed);
  for (double& w : p.weights) w *= scale;
  for (double& b : p.bias) b *= scale;
  return p;
}

}  // namespace

std::string_view to_string(Direction d) noexcept { return d == Direction::forward ? "forward" : "reverse"; }

double shift_invariance_gap(std::span<const double> z, double c) {
  if (z.size() < 2) throw ContractViolation("check_shift_invariance: need at least two entries");
  require_finite(z, "check_shift_invariance");
  if (!std::isfinite(c)) throw ContractViolation("check_shift_invariance: non-finite shift");
  Vec shifted(z.begin(), z.end());
  for (double& x : shifted) x += c;
  return max_abs_diff(softmax(z), softmax(shifted));
}

bool check_shift_invariance(std::span<const double> z, double c) { return shift_invariance_gap(z, c) <= kShiftTolerance; }

double max_pl_gap(const PLDistribution& a, const PLDistribution& b) {
  if (a.size() != b.size()) throw ContractViolation("max_pl_gap: item count mismatch");
  const auto ta = enumerate_pl(a);
  const auto tb = enumerate_pl(b);
  double gap = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) gap = std::max(gap, std::abs(ta[i].second - tb[i].second));
  return gap;
}

EquivalenceReport check_prop1_forward(std::span<const double> log_probs, std::span<const double> old_log_probs,
                                      std::span<const double> rewards, double beta) {
  const std::size_t n = log_probs.size();
  if (old_log_probs.size() != n || rewards.size() != n) throw ContractViolation("check_prop1_forward: length mismatch");
  if (n > kMaxEnumerationSize) throw OracleCapError("check_prop1_forward: rollout set exceeds enumeration cap");
  require_finite(log_probs, "check_prop1_forward");
  const OptimalWeights w = optimal_weights(old_log_probs, rewards, beta);

  Vec z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = old_log_probs[i] + rewards[i] / beta;
  const Vec log_w = log_softmax(z);
  const Vec log_q = log_softmax(log_probs);
  // pi_theta moved onto pi*: unnormalized log-probs keep their original offset.
  Vec moved(n);
  for (std::size_t i = 0; i < n; ++i) moved[i] = log_probs[i] + (log_w[i] - log_q[i]);

  const auto theta_pl = policy_induced_pl(moved, old_log_probs, beta);
  const auto optimal_pl = policy_induced_pl(log_w, old_log_probs, beta);
  const auto reward_pl = reward_induced_pl(rewards);

  EquivalenceReport r;
  r.direction = Direction::forward;
  r.max_pl_gap = std::max(max_pl_gap(theta_pl, optimal_pl), max_pl_gap(theta_pl, reward_pl));
  r.max_policy_gap = max_abs_diff(softmax(moved), w.weights);
  r.pass = r.max_pl_gap <= kPlGapTolerance && r.max_policy_gap <= kPolicyGapTolerance;
  return r;
}

EquivalenceReport check_prop1_forward(const PolicyParams& params, const PolicyParams& old_params,
                                      const RolloutSet& rollouts, const ToolLibrary& lib,
                                      std::span<const double> rewards, double beta) {
  if (rollouts.size() > kMaxEnumerationSize) {
    throw OracleCapError("check_prop1_forward: rollout set exceeds enumeration cap");
  }
  const Vec ell = replay_log_probs(params, rollouts, lib);
  const Vec ell_old = replay_log_probs(old_params, rollouts, lib);
  return check_prop1_forward(ell, ell_old, rewards, beta);
}

EquivalenceReport check_prop1_reverse(const PLDistribution& a, const PLDistribution& b,
                                      std::span<const double> old_log_probs) {
  validate(a);
  validate(b);
  if (a.size() != b.size() || a.items != b.items) throw ContractViolation("check_prop1_reverse: item sets differ");
  if (a.kind != PLKind::policy_induced || b.kind != PLKind::policy_induced) {
    throw ContractViolation("check_prop1_reverse: both distributions must be policy-induced");
  }
  if (a.beta != b.beta) throw ContractViolation("check_prop1_reverse: beta differs");
  const std::size_t n = a.size();
  Vec old(n, 0.0);
  if (!old_log_probs.empty()) {
    if (old_log_probs.size() != n) throw ContractViolation("check_prop1_reverse: old log-prob length mismatch");
    old.assign(old_log_probs.begin(), old_log_probs.end());
  }

  EquivalenceReport r;
  r.direction = Direction::reverse;
  double worst = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double gap = std::abs(pairwise_marginal(a, i, j) - pairwise_marginal(b, i, j));
      r.max_pl_gap = std::max(r.max_pl_gap, gap);
      if (gap > kMarginalTolerance && gap > worst) {
        worst = gap;
        r.witness = std::make_pair(i, j);
      }
    }
  }
  if (r.witness) {
    r.pass = false;
    return r;
  }

  // Score differences relative to item 0, read back off the marginals.
  Vec diff_a(n, 0.0);
  Vec diff_b(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    diff_a[i] = logit(pairwise_marginal(a, i, 0));
    diff_b[i] = logit(pairwise_marginal(b, i, 0));
  }
  Vec log_pi_a(n);
  Vec log_pi_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_pi_a[i] = diff_a[i] / a.beta + old[i];
    log_pi_b[i] = diff_b[i] / b.beta + old[i];
  }
  r.max_policy_gap = max_abs_diff(softmax(log_pi_a), softmax(log_pi_b));
  r.pass = r.max_policy_gap <= kPolicyGapTolerance;
  return r;
}

nlohmann::ordered_json report_to_json(const EquivalenceReport& r) {
  nlohmann::ordered_json j;
  j["direction"] = to_string(r.direction);
  j["max_pl_gap"] = r.max_pl_gap;
  j["max_policy_gap"] = r.max_policy_gap;
  j["pass"] = r.pass;
  if (r.witness) {
    j["witness"] = {r.witness->first, r.witness->second};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

SuiteReport run_verification_suite(const VerifyConfig& config) {
  if (config.max_items < 2 || config.max_items > kMaxEnumerationSize) {
    throw ContractViolation("run_verification_suite: max_items must be in [2, 8]");
  }
  SuiteReport s;
  auto fail = [&s](const std::string& msg) {
    s.pass = false;
    if (s.first_failure.empty()) s.first_failure = msg;
  };

  {
    Vec gaps(config.shift_instances);
    parallel_for(gaps.size(), config.threads, [&](std::size_t k) {
      Rng rng(derive_seed(derive_seed(config.seed, "verify-shift"), static_cast<std::uint64_t>(k)));
      const Vec z = random_vector(rng, 2 + rng.below(15), 3.0);
      gaps[k] = shift_invariance_gap(z, rng.uniform(-100.0, 100.0));
    });
    for (std::size_t k = 0; k < gaps.size(); ++k) {
      s.shift_max_gap = std::max(s.shift_max_gap, gaps[k]);
      if (gaps[k] > kShiftTolerance) {
        ++s.shift_failures;
        fail("shift invariance instance " + std::to_string(k));
      }
    }
  }

  {
    std::size_t idx = 0;
    for (std::size_t n = 2; n <= config.max_items; ++n) {
      for (std::size_t k = 0; k < config.normalization_per_size; ++k, ++idx) {
        Rng rng(derive_seed(derive_seed(config.seed, "verify-normalization"), static_cast<std::uint64_t>(idx)));
        double total = 0.0;
        for (const auto& [perm, p] : enumerate_pl(reward_induced_pl(random_vector(rng, n, 2.0)))) total += p;
        const double err = std::abs(total - 1.0);
        s.normalization_max_error = std::max(s.normalization_max_error, err);
        if (err > 1e-9) {
          ++s.normalization_failures;
          fail("PL normalization instance " + std::to_string(idx));
        }
      }
    }
  }

  {
    const ForwardFixture fx = forward_fixture(config.seed);
    s.forward.resize(config.instances);
    parallel_for(config.instances, config.threads, [&](std::size_t k) {
      const std::uint64_t base = derive_seed(derive_seed(config.seed, "verify-forward"), static_cast<std::uint64_t>(k));
      Rng rng(base);
      const std::size_t n = random_size(rng, config.max_items);
      const Task& task = fx.tasks[rng.below(fx.tasks.size())];
      const PolicyParams old_params = scaled_params(fx.lib.dim(), derive_seed(base, "old"), 10.0);
      const PolicyParams params = scaled_params(fx.lib.dim(), derive_seed(base, "new"), 10.0);
      const RolloutSet set = collect_rollouts(old_params, task, fx.lib, task.allowed_tools, n, derive_seed(base, "roll"));
      const Vec rewards = reward_totals(score_rollouts(set, task, fx.lib));
      s.forward[k] = check_prop1_forward(params, old_params, set, fx.lib, rewards, config.beta);
    });
    for (std::size_t k = 0; k < s.forward.size(); ++k) {
      if (!s.forward[k].pass) fail("forward instance " + std::to_string(k));
    }
  }

  {
    s.reverse.resize(config.instances);
    s.reverse_rejected.resize(config.instances);
    parallel_for(config.instances, config.threads, [&](std::size_t k) {
      Rng rng(derive_seed(derive_seed(config.seed, "verify-reverse"), static_cast<std::uint64_t>(k)));
      const std::size_t n = random_size(rng, config.max_items);
      const Vec old = random_vector(rng, n, 1.0);
      const Vec logp = random_vector(rng, n, 1.0);
      const double shift = rng.uniform(-5.0, 5.0);
      const std::size_t victim = rng.below(n);

      Vec shifted = logp;
      for (double& x : shifted) x += shift;
      Vec perturbed = shifted;
      perturbed[victim] += 0.1 / config.beta;

      const auto a = policy_induced_pl(logp, old, config.beta);
      const auto b = policy_induced_pl(config.inject_perturbation ? perturbed : shifted, old, config.beta);
      const auto c = policy_induced_pl(perturbed, old, config.beta);
      s.reverse[k] = check_prop1_reverse(a, b, old);
      s.reverse_rejected[k] = check_prop1_reverse(a, c, old);
    });
    for (std::size_t k = 0; k < config.instances; ++k) {
      if (!s.reverse[k].pass) {
        std::string msg = "reverse instance " + std::to_string(k);
        if (s.reverse[k].witness) {
          msg += " witness (" + std::to_string(s.reverse[k].witness->first) + ", " +
                 std::to_string(s.reverse[k].witness->second) + ")";
        }
        fail(msg);
      }
      if (s.reverse_rejected[k].pass || !s.reverse_rejected[k].witness) {
        fail("perturbed reverse instance " + std::to_string(k) + " was not rejected");
      }
    }
  }
  return s;
}

nlohmann::ordered_json suite_to_json(const SuiteReport& s) {
  nlohmann::ordered_json j;
  j["pass"] = s.pass;
  j["first_failure"] = s.first_failure;
  j["shift_invariance"] = {{"failures", s.shift_failures}, {"max_gap", s.shift_max_gap}};
  j["pl_normalization"] = {{"failures", s.normalization_failures}, {"max_error", s.normalization_max_error}};
  auto dump = [](const std::vector<EquivalenceReport>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : v) arr.push_back(report_to_json(r));
    return arr;
  };
  j["forward"] = dump(s.forward);
  j["reverse"] = dump(s.reverse);
  j["reverse_perturbed"] = dump(s.reverse_rejected);
  return j;
}

}  // namespace autotool

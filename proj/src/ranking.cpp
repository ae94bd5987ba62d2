#include "autotool/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "autotool/errors.hpp"

namespace autotool {

void validate(const PLDistribution& dist) {
  if (dist.scores.size() < 2) throw ContractViolation("PL distribution needs at least two items");
  if (dist.items.size() != dist.scores.size()) throw ContractViolation("PL distribution: items/scores mismatch");
  if (!all_finite(dist.scores)) throw ContractViolation("PL distribution: non-finite score");
  if (dist.kind == PLKind::policy_induced && !(dist.beta > 0.0)) {
    throw ContractViolation("PL distribution: beta must be positive");
  }
}

PLDistribution reward_induced_pl(std::span<const double> rewards) {
  PLDistribution d;
  d.items.resize(rewards.size());
  std::iota(d.items.begin(), d.items.end(), std::size_t{0});
  d.scores.assign(rewards.begin(), rewards.end());
  d.kind = PLKind::reward_induced;
  validate(d);
  return d;
}

PLDistribution policy_induced_pl(std::span<const double> log_probs, std::span<const double> old_log_probs,
                                 double beta) {
  if (log_probs.size() != old_log_probs.size()) throw ContractViolation("policy_induced_pl: length mismatch");
  PLDistribution d;
  d.items.resize(log_probs.size());
  std::iota(d.items.begin(), d.items.end(), std::size_t{0});
  d.scores.resize(log_probs.size());
  for (std::size_t i = 0; i < log_probs.size(); ++i) d.scores[i] = beta * (log_probs[i] - old_log_probs[i]);
  d.kind = PLKind::policy_induced;
  d.beta = beta;
  validate(d);
  return d;
}

double pl_log_probability(const PLDistribution& dist, const Permutation& sigma) {
  validate(dist);
  const std::size_t n = dist.size();
  if (sigma.order.size() != n) throw ContractViolation("pl_probability: permutation length mismatch");
  std::vector<bool> used(n, false);
  for (std::size_t k : sigma.order) {
    if (k >= n || used[k]) throw ContractViolation("pl_probability: not a permutation");
    used[k] = true;
  }
  Vec tail(n);
  for (std::size_t j = 0; j < n; ++j) tail[j] = dist.scores[sigma.order[j]];
  double lp = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    lp += tail[j] - log_sum_exp(std::span<const double>(tail).subspan(j));
  }
  return lp;
}

double pl_probability(const PLDistribution& dist, const Permutation& sigma) {
  return std::exp(pl_log_probability(dist, sigma));
}

std::vector<std::pair<Permutation, double>> enumerate_pl(const PLDistribution& dist) {
  validate(dist);
  if (dist.size() > kMaxEnumerationSize) {
    throw OracleCapError("enumerate_pl: " + std::to_string(dist.size()) + " items exceeds the cap of " +
                         std::to_string(kMaxEnumerationSize));
  }
  std::vector<std::pair<Permutation, double>> out;
  Permutation p;
  p.order.resize(dist.size());
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  do {
    out.emplace_back(p, pl_probability(dist, p));
  } while (std::next_permutation(p.order.begin(), p.order.end()));
  return out;
}

double pairwise_marginal(const PLDistribution& dist, std::size_t i, std::size_t j) {
  validate(dist);
  if (i == j) throw ContractViolation("pairwise_marginal: i == j");
  if (i >= dist.size() || j >= dist.size()) throw ContractViolation("pairwise_marginal: index out of range");
  const double diff = dist.scores[i] - dist.scores[j];
  // Branch on sign so exp never overflows.
  if (diff >= 0.0) return 1.0 / (1.0 + std::exp(-diff));
  const double e = std::exp(diff);
  return e / (1.0 + e);
}

void write_pl_csv(std::ostream& out, std::span<const std::pair<Permutation, double>> table) {
  out << "permutation,probability\n";
  char buf[32];
  for (const auto& [perm, prob] : table) {
    for (std::size_t k = 0; k < perm.order.size(); ++k) out << (k ? " " : "") << perm.order[k];
    std::snprintf(buf, sizeof buf, "%.17g", prob);
    out << ',' << buf << '\n';
  }
}

}  // namespace autotool

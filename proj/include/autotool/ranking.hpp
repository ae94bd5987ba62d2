#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "autotool/vecmath.hpp"

namespace autotool {

enum class PLKind { reward_induced, policy_induced };

/// Plackett-Luce distribution over the orderings of `items`; scores are log-utilities.
struct PLDistribution {
  std::vector<std::size_t> items;
  Vec scores;
  PLKind kind = PLKind::reward_induced;
  double beta = 1.0;  // meaningful for policy_induced only

  std::size_t size() const noexcept { return scores.size(); }
};

/// order[j] is the item index placed at rank j.
struct Permutation {
  std::vector<std::size_t> order;
};

inline constexpr std::size_t kMaxEnumerationSize = 8;

/// Throws ContractViolation unless N >= 2, scores are finite and items align.
void validate(const PLDistribution& dist);

/// Scores are the rewards themselves.
PLDistribution reward_induced_pl(std::span<const double> rewards);

/// Scores are beta * (log pi - log pi_old) per trajectory.
PLDistribution policy_induced_pl(std::span<const double> log_probs, std::span<const double> old_log_probs,
                                 double beta);

/// sum_j [s_{order[j]} - logsumexp_{l >= j} s_{order[l]}].
double pl_log_probability(const PLDistribution& dist, const Permutation& sigma);
double pl_probability(const PLDistribution& dist, const Permutation& sigma);

/// Every permutation in lexicographic order with its probability. N <= 8.
std::vector<std::pair<Permutation, double>> enumerate_pl(const PLDistribution& dist);

/// P(i ranked before j) = sigmoid(s_i - s_j).
double pairwise_marginal(const PLDistribution& dist, std::size_t i, std::size_t j);

/// "permutation,probability" rows, permutation items joined by spaces.
void write_pl_csv(std::ostream& out, std::span<const std::pair<Permutation, double>> table);

}  // namespace autotool

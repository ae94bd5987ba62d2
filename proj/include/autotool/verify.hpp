#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "autotool/objective.hpp"
#include "autotool/ranking.hpp"
#include "json.hpp"

namespace autotool {

enum class Direction { forward, reverse };

std::string_view to_string(Direction d) noexcept;

struct EquivalenceReport {
  Direction direction = Direction::forward;
  double max_pl_gap = 0.0;
  double max_policy_gap = 0.0;
  bool pass = false;
  /// Pair (i, j) whose before/after marginals disagree, when the reverse check fails.
  std::optional<std::pair<std::size_t, std::size_t>> witness;
};

inline constexpr double kPlGapTolerance = 1e-9;
inline constexpr double kPolicyGapTolerance = 1e-8;
inline constexpr double kMarginalTolerance = 1e-9;
inline constexpr double kShiftTolerance = 1e-12;

/// Largest elementwise gap between softmax(z) and softmax(z + C).
double shift_invariance_gap(std::span<const double> z, double c);
bool check_shift_invariance(std::span<const double> z, double c);

/// L-infinity distance between two fully enumerated PL distributions.
double max_pl_gap(const PLDistribution& a, const PLDistribution& b);

/// Moves pi_theta onto the optimal policy over the rollout set (shifting each
/// trajectory's log-prob so that softmax(l_theta) = w) and compares the PL
/// distribution it induces against the optimal policy's own and against the
/// reward-induced PL. Pass iff both gaps <= 1e-9 and the policy gap <= 1e-8.
EquivalenceReport check_prop1_forward(const PolicyParams& params, const PolicyParams& old_params,
                                      const RolloutSet& rollouts, const ToolLibrary& lib,
                                      std::span<const double> rewards, double beta);

/// Same check on raw log-probs, no rollouts needed.
EquivalenceReport check_prop1_forward(std::span<const double> log_probs, std::span<const double> old_log_probs,
                                      std::span<const double> rewards, double beta);

/// Compares all pairwise marginals; on agreement recovers the score differences,
/// checks they differ by a constant, and compares the normalized policies
/// pi ∝ pi_old * exp(s / beta). `old_log_probs` defaults to zeros.
EquivalenceReport check_prop1_reverse(const PLDistribution& a, const PLDistribution& b,
                                      std::span<const double> old_log_probs = {});

nlohmann::ordered_json report_to_json(const EquivalenceReport& r);

struct VerifyConfig {
  std::uint64_t seed = 1;
  std::size_t instances = 200;
  std::size_t shift_instances = 1000;
  std::size_t normalization_per_size = 50;
  std::size_t max_items = 6;
  double beta = 0.1;
  /// Perturb every agreeing reverse-check pair so the suite must fail.
  bool inject_perturbation = false;
  std::size_t threads = 1;
};

struct SuiteReport {
  bool pass = true;
  std::size_t shift_failures = 0;
  double shift_max_gap = 0.0;
  std::size_t normalization_failures = 0;
  double normalization_max_error = 0.0;
  std::vector<EquivalenceReport> forward;
  std::vector<EquivalenceReport> reverse;           // agreeing pairs, expected to pass
  std::vector<EquivalenceReport> reverse_rejected;  // perturbed pairs, expected to fail with witness
  std::string first_failure;
};

SuiteReport run_verification_suite(const VerifyConfig& config);
nlohmann::ordered_json suite_to_json(const SuiteReport& s);

}  // namespace autotool

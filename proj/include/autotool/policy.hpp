#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "autotool/toolset.hpp"
#include "json.hpp"

namespace autotool {

inline constexpr double kDefaultGamma = 1.0;

/// What the policy sees at a selection step: the task features, a summary of
/// earlier selections, and the step position.
struct ContextState {
  Vec task_context;
  Vec history_summary;
  std::size_t step_index = 0;

  /// context ⊕ history ⊕ step_index / kMaxTaskLength, length 2d + 1.
  Vec flatten() const;
};

/// Affine anchor predictor e' = W x + b and the skewness gamma of the
/// distance softmax.
struct PolicyParams {
  std::size_t dim = 0;
  Vec weights;  // dim x (2*dim + 1), row-major
  Vec bias;     // dim
  double gamma = kDefaultGamma;

  std::size_t input_dim() const noexcept { return 2 * dim + 1; }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

  /// Weights then bias; the layout of ce_loss gradients.
  Vec flat() const;
  void assign_flat(std::span<const double> values);
};

/// W, b ~ U[-0.1, 0.1] from `seed`.
PolicyParams init_params(std::size_t dim, double gamma, std::uint64_t seed);

/// Throws ContractViolation on bad shapes, non-finite entries or gamma <= 0.
void validate(const PolicyParams& params);

/// {"shape": [d, 2d+1], "gamma": g, "values": [W..., b...]}.
nlohmann::ordered_json params_to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);

Vec predict_anchor(const PolicyParams& params, const ContextState& ctx);

struct SelectionDistribution {
  std::vector<ToolId> ids;
  Vec probs;
  Vec log_probs;

  std::size_t index_of(ToolId id) const;
  double prob(ToolId id) const { return probs[index_of(id)]; }
};

/// p(k) ∝ exp(-gamma * ||anchor - e_k||^2) over `pool`, evaluated in log space.
SelectionDistribution selection_distribution(std::span<const double> anchor, const ToolLibrary& lib,
                                             std::span<const ToolId> pool, double gamma);

enum class SelectMode { sample, greedy };

/// Greedy: highest probability, ties to the smallest id. Sample: inverse CDF
/// draw reproducible from `rng_seed`.
ToolId sample_tool(const SelectionDistribution& dist, std::uint64_t rng_seed, SelectMode mode);

double selection_log_prob(const PolicyParams& params, const ContextState& ctx, const ToolLibrary& lib,
                          std::span<const ToolId> pool, ToolId chosen);

/// d log p(chosen) / d anchor = 2 gamma (e_chosen - E_p[e]).
Vec log_prob_anchor_gradient(const SelectionDistribution& dist, const ToolLibrary& lib, ToolId chosen,
                             double gamma);

}  // namespace autotool

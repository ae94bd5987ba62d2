#include "autotool/policy.hpp"

#include <cmath>

#include "autotool/errors.hpp"
#include "autotool/rng.hpp"
#include "autotool/taskgen.hpp"

namespace autotool {

Vec ContextState::flatten() const {
  if (task_context.size() != history_summary.size()) {
    throw ContractViolation("ContextState: context and history dimensions differ");
  }
  Vec x;
  x.reserve(2 * task_context.size() + 1);
  x.insert(x.end(), task_context.begin(), task_context.end());
  x.insert(x.end(), history_summary.begin(), history_summary.end());
  x.push_back(static_cast<double>(step_index) / static_cast<double>(kMaxTaskLength));
  return x;
}

Vec PolicyParams::flat() const {
  Vec out;
  out.reserve(parameter_count());
  out.insert(out.end(), weights.begin(), weights.end());
  out.insert(out.end(), bias.begin(), bias.end());
  return out;
}

void PolicyParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) throw ContractViolation("assign_flat: size mismatch");
  std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(weights.size()), weights.begin());
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(weights.size()), values.end(), bias.begin());
}

PolicyParams init_params(std::size_t dim, double gamma, std::uint64_t seed) {
  PolicyParams p;
  p.dim = dim;
  p.gamma = gamma;
  p.weights.resize(dim * (2 * dim + 1));
  p.bias.resize(dim);
  Rng rng(derive_seed(seed, "init"));
  for (double& w : p.weights) w = rng.uniform(-0.1, 0.1);
  for (double& b : p.bias) b = rng.uniform(-0.1, 0.1);
  validate(p);
  return p;
}

void validate(const PolicyParams& params) {
  if (params.dim < 2) throw ContractViolation("PolicyParams: dimension must be >= 2");
  if (params.weights.size() != params.dim * params.input_dim() || params.bias.size() != params.dim) {
    throw ContractViolation("PolicyParams: shape mismatch");
  }
  if (!(params.gamma > 0.0) || !std::isfinite(params.gamma)) {
    throw ContractViolation("PolicyParams: gamma must be positive and finite");
  }
  if (!all_finite(params.weights) || !all_finite(params.bias)) {
    throw ContractViolation("PolicyParams: non-finite entries");
  }
}

nlohmann::ordered_json params_to_json(const PolicyParams& params) {
  nlohmann::ordered_json j;
  j["shape"] = {params.dim, params.input_dim()};
  j["gamma"] = params.gamma;
  j["values"] = params.flat();
  return j;
}

PolicyParams params_from_json(const nlohmann::json& j) {
  try {
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[1] != 2 * shape[0] + 1) {
      throw ContractViolation("params JSON: shape must be [d, 2d+1]");
    }
    PolicyParams p;
    p.dim = shape[0];
    p.gamma = j.at("gamma").get<double>();
    p.weights.resize(p.dim * p.input_dim());
    p.bias.resize(p.dim);
    p.assign_flat(j.at("values").get<Vec>());
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed params JSON: ") + e.what());
  }
}

Vec predict_anchor(const PolicyParams& params, const ContextState& ctx) {
  const Vec x = ctx.flatten();
  if (x.size() != params.input_dim()) throw ContractViolation("predict_anchor: context dimension mismatch");
  const std::span<const double> w(params.weights);
  Vec anchor(params.dim);
  for (std::size_t r = 0; r < params.dim; ++r) {
    anchor[r] = dot(w.subspan(r * x.size(), x.size()), x) + params.bias[r];
  }
  return anchor;
}

std::size_t SelectionDistribution::index_of(ToolId id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  throw ContractViolation("tool " + std::to_string(id_value(id)) + " is not in the selection pool");
}

SelectionDistribution selection_distribution(std::span<const double> anchor, const ToolLibrary& lib,
                                             std::span<const ToolId> pool, double gamma) {
  if (pool.empty()) throw SelectionError("selection_distribution: empty pool");
  if (!(gamma > 0.0)) throw ContractViolation("selection_distribution: gamma must be positive");
  if (anchor.size() != lib.dim()) throw ContractViolation("selection_distribution: anchor dimension mismatch");

  SelectionDistribution d;
  d.ids.assign(pool.begin(), pool.end());
  Vec logits(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    logits[k] = -gamma * squared_distance(anchor, lib.embedding_vector(pool[k]));
  }
  d.log_probs = log_softmax(logits);
  d.probs.resize(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) d.probs[k] = std::exp(d.log_probs[k]);
  return d;
}

ToolId sample_tool(const SelectionDistribution& dist, std::uint64_t rng_seed, SelectMode mode) {
  if (dist.ids.empty() || dist.ids.size() != dist.probs.size()) {
    throw SelectionError("sample_tool: invalid distribution");
  }
  if (mode == SelectMode::greedy) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < dist.ids.size(); ++k) {
      if (dist.probs[k] > dist.probs[best] || (dist.probs[k] == dist.probs[best] && dist.ids[k] < dist.ids[best])) {
        best = k;
      }
    }
    return dist.ids[best];
  }
  Rng rng(rng_seed);
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < dist.ids.size(); ++k) {
    if (dist.probs[k] <= 0.0) continue;
    last_positive = k;
    cum += dist.probs[k];
    if (u < cum) return dist.ids[k];
  }
  return dist.ids[last_positive];
}

double selection_log_prob(const PolicyParams& params, const ContextState& ctx, const ToolLibrary& lib,
                          std::span<const ToolId> pool, ToolId chosen) {
  const Vec anchor = predict_anchor(params, ctx);
  const auto dist = selection_distribution(anchor, lib, pool, params.gamma);
  return dist.log_probs[dist.index_of(chosen)];
}

Vec log_prob_anchor_gradient(const SelectionDistribution& dist, const ToolLibrary& lib, ToolId chosen,
                             double gamma) {
  const std::size_t dim = lib.dim();
  Vec mean(dim, 0.0);
  for (std::size_t k = 0; k < dist.ids.size(); ++k) {
    const auto e = lib.embedding_vector(dist.ids[k]);
    for (std::size_t i = 0; i < dim; ++i) mean[i] += dist.probs[k] * e[i];
  }
  const auto ec = lib.embedding_vector(chosen);
  Vec g(dim);
  for (std::size_t i = 0; i < dim; ++i) g[i] = 2.0 * gamma * (ec[i] - mean[i]);
  return g;
}

}  // namespace autotool

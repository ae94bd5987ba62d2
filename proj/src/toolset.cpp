#include "autotool/toolset.hpp"

#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "autotool/errors.hpp"
#include "autotool/rng.hpp"

namespace autotool {
namespace {

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

Vec token_direction(std::string_view token, std::uint64_t seed, std::size_t dim) {
  Rng rng(mix64(fnv1a(token) ^ mix64(seed)));
  Vec v(dim);
  for (double& x : v) x = rng.normal();
  return normalized(v);
}

// Gram-Schmidt on a seeded Gaussian matrix; rows form an orthonormal basis.
Vec seeded_orthogonal(std::uint64_t seed, std::size_t dim) {
  Rng rng(derive_seed(seed, "latent-rotation"));
  std::vector<Vec> rows;
  while (rows.size() < dim) {
    Vec r(dim);
    for (double& x : r) x = rng.normal();
    for (const Vec& q : rows) {
      const double p = dot(r, q);
      for (std::size_t i = 0; i < dim; ++i) r[i] -= p * q[i];
    }
    if (norm(r) < 1e-8) continue;
    rows.push_back(normalized(r));
  }
  Vec out;
  out.reserve(dim * dim);
  for (const Vec& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

Vec rotate(std::span<const double> rotation, std::span<const double> v) {
  const std::size_t dim = v.size();
  Vec out(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    out[r] = dot(rotation.subspan(r * dim, dim), v);
  }
  return normalized(out);
}

void check_latent(const ToolSpec& spec, std::size_t dim) {
  if (spec.latent_function.size() != dim || !all_finite(spec.latent_function) ||
      std::abs(norm(spec.latent_function) - 1.0) > 1e-9) {
    throw InvalidSpecError("tool " + spec.name + ": latent_function must be a finite unit vector of dimension " +
                           std::to_string(dim));
  }
}

}  // namespace

std::string_view to_string(ToolCategory c) noexcept {
  switch (c) {
    case ToolCategory::code: return "code";
    case ToolCategory::search: return "search";
    case ToolCategory::image: return "image";
    case ToolCategory::other: return "other";
  }
  return "other";
}

ToolCategory category_from_string(std::string_view s) {
  if (s == "code") return ToolCategory::code;
  if (s == "search") return ToolCategory::search;
  if (s == "image") return ToolCategory::image;
  if (s == "other") return ToolCategory::other;
  throw InvalidSpecError("unknown tool category: " + std::string(s));
}

ToolEmbedding embed_tool(const ToolSpec& spec, std::uint64_t seed, std::size_t dim) {
  if (dim < 2) throw ContractViolation("embed_tool: dimension must be >= 2");
  const auto desc_tokens = whitespace_tokens(spec.description);
  if (desc_tokens.empty()) throw InvalidSpecError("tool " + spec.name + ": empty description");

  auto tokens = whitespace_tokens(spec.name);
  tokens.insert(tokens.end(), desc_tokens.begin(), desc_tokens.end());

  Vec sum(dim, 0.0);
  for (const auto& tok : tokens) {
    const Vec dir = token_direction(tok, seed, dim);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += dir[i];
  }
  for (double& x : sum) x /= static_cast<double>(tokens.size());
  return ToolEmbedding{spec.id, normalized(sum)};
}

const ToolSpec& ToolLibrary::tool(ToolId id) const { return tools_[index_of(id)]; }

const ToolEmbedding& ToolLibrary::embedding(ToolId id) const { return embeddings_[index_of(id)]; }

std::size_t ToolLibrary::index_of(ToolId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ContractViolation("unknown tool id " + std::to_string(id_value(id)));
  return it->second;
}

std::vector<ToolId> ToolLibrary::ids() const {
  std::vector<ToolId> out;
  out.reserve(tools_.size());
  for (const auto& t : tools_) out.push_back(t.id);
  return out;
}

bool ToolLibrary::is_seen(ToolId id) const {
  return std::find(seen_.begin(), seen_.end(), id) != seen_.end();
}

void ToolLibrary::append(ToolSpec spec) {
  if (index_.contains(spec.id)) {
    throw InvalidLibraryError("duplicate tool id " + std::to_string(id_value(spec.id)));
  }
  ToolEmbedding emb = embed_tool(spec, seed_, dim_);
  if (spec.latent_function.empty()) {
    spec.latent_function = rotate(rotation_, emb.vector);
  } else {
    check_latent(spec, dim_);
  }
  index_.emplace(spec.id, tools_.size());
  tools_.push_back(std::move(spec));
  embeddings_.push_back(std::move(emb));
}

ToolLibrary ToolLibrary::assemble(std::vector<ToolSpec> specs, const std::vector<ToolId>& seen,
                                  std::uint64_t seed, std::size_t dim) {
  if (specs.empty()) throw InvalidLibraryError("library needs at least one tool");
  if (dim < 2) throw ContractViolation("library dimension must be >= 2");
  ToolLibrary lib;
  lib.seed_ = seed;
  lib.dim_ = dim;
  lib.rotation_ = seeded_orthogonal(seed, dim);
  for (auto& s : specs) lib.append(std::move(s));

  const std::set<ToolId> seen_set(seen.begin(), seen.end());
  if (seen_set.size() != seen.size()) throw InvalidLibraryError("seen_ids contains duplicates");
  for (ToolId id : seen_set) {
    if (!lib.contains(id)) {
      throw InvalidLibraryError("seen id " + std::to_string(id_value(id)) + " is not in the library");
    }
  }
  lib.seen_.assign(seen_set.begin(), seen_set.end());
  for (const auto& [id, idx] : lib.index_) {
    if (!seen_set.contains(id)) lib.unseen_.push_back(id);
  }
  return lib;
}

ToolLibrary build_library(std::vector<ToolSpec> specs, double seen_fraction, std::uint64_t seed,
                          std::size_t dim) {
  if (specs.empty()) throw InvalidLibraryError("build_library: no tool specs");
  if (!(seen_fraction > 0.0 && seen_fraction <= 1.0)) {
    throw ContractViolation("build_library: seen_fraction must be in (0, 1]");
  }
  std::set<ToolId> unique;
  for (const auto& s : specs) {
    if (!unique.insert(s.id).second) {
      throw InvalidLibraryError("duplicate tool id " + std::to_string(id_value(s.id)));
    }
  }

  const std::size_t n = specs.size();
  auto seen_count = static_cast<std::size_t>(std::lround(seen_fraction * static_cast<double>(n)));
  seen_count = std::clamp<std::size_t>(seen_count, 1, n);

  std::vector<ToolId> order;
  order.reserve(n);
  for (const auto& s : specs) order.push_back(s.id);
  Rng rng(derive_seed(seed, "partition"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  order.resize(seen_count);

  return ToolLibrary::assemble(std::move(specs), order, seed, dim);
}

ToolLibrary extend_library(const ToolLibrary& lib, std::vector<ToolSpec> new_specs) {
  ToolLibrary out = lib;
  for (auto& s : new_specs) {
    if (out.contains(s.id)) {
      throw InvalidExtensionError("tool id " + std::to_string(id_value(s.id)) + " already exists");
    }
    const ToolId id = s.id;
    out.append(std::move(s));
    out.unseen_.push_back(id);
  }
  return out;
}

nlohmann::ordered_json ToolLibrary::to_json() const {
  nlohmann::ordered_json j;
  auto tools = nlohmann::ordered_json::array();
  for (const auto& t : tools_) {
    nlohmann::ordered_json e;
    e["id"] = id_value(t.id);
    e["name"] = t.name;
    e["description"] = t.description;
    e["category"] = to_string(t.category);
    tools.push_back(std::move(e));
  }
  j["tools"] = std::move(tools);
  j["seed"] = seed_;
  j["d"] = dim_;
  auto seen = nlohmann::ordered_json::array();
  for (ToolId id : seen_) seen.push_back(id_value(id));
  j["seen_ids"] = std::move(seen);
  return j;
}

ToolLibrary ToolLibrary::from_json(const nlohmann::json& j) {
  try {
    std::vector<ToolSpec> specs;
    for (const auto& e : j.at("tools")) {
      ToolSpec s;
      s.id = ToolId{e.at("id").get<std::uint32_t>()};
      s.name = e.at("name").get<std::string>();
      s.description = e.at("description").get<std::string>();
      s.category = category_from_string(e.at("category").get<std::string>());
      specs.push_back(std::move(s));
    }
    std::vector<ToolId> seen;
    for (const auto& v : j.at("seen_ids")) seen.push_back(ToolId{v.get<std::uint32_t>()});
    if (seen.empty()) throw InvalidLibraryError("library file has no seen tools");
    return assemble(std::move(specs), seen, j.at("seed").get<std::uint64_t>(),
                    j.at("d").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidLibraryError(std::string("malformed library JSON: ") + e.what());
  }
}

std::vector<ToolSpec> synthesize_tool_specs(std::size_t count, std::uint64_t seed, std::uint32_t first_id) {
  static constexpr std::array<std::array<std::string_view, 10>, 4> kCategoryWords{{
      {"python", "execute", "script", "compile", "interpreter", "function", "debug", "sandbox", "compute",
       "program"},
      {"web", "query", "retrieve", "wikipedia", "news", "results", "lookup", "index", "crawl", "article"},
      {"ocr", "image", "pixel", "crop", "detect", "caption", "photo", "region", "vision", "render"},
      {"calendar", "weather", "translate", "convert", "unit", "email", "map", "schedule", "currency", "file"},
  }};
  static constexpr std::array<std::string_view, 40> kShared{
      "data",  "text",   "fast",   "input", "output", "return", "list",   "value", "table",  "format",
      "number", "string", "json",  "batch", "api",    "local",  "remote", "stream", "parse", "summary",
      "extract", "answer", "step", "graph", "chart",  "time",   "date",   "record", "match", "filter",
      "sort",  "merge",  "split",  "count", "score",  "rank",   "check",  "validate", "report", "cache"};
  static constexpr std::array<ToolCategory, 4> kCategories{ToolCategory::code, ToolCategory::search,
                                                           ToolCategory::image, ToolCategory::other};

  Rng rng(derive_seed(seed, "tools"));
  std::vector<ToolSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cat = rng.below(kCategories.size());
    const auto& words = kCategoryWords[cat];
    ToolSpec s;
    s.id = ToolId{first_id + static_cast<std::uint32_t>(i)};
    s.category = kCategories[cat];
    s.name = std::string(words[rng.below(words.size())]) + "_tool_" + std::to_string(id_value(s.id));
    std::string desc;
    for (int k = 0; k < 2; ++k) {
      desc += words[rng.below(words.size())];
      desc += ' ';
    }
    for (int k = 0; k < 4; ++k) {
      desc += kShared[rng.below(kShared.size())];
      if (k != 3) desc += ' ';
    }
    s.description = std::move(desc);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace autotool

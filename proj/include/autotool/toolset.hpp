#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autotool/vecmath.hpp"
#include "json.hpp"

namespace autotool {

/// Opaque tool identifier. Ordered so that "smallest id" tie-breaks are well defined.
enum class ToolId : std::uint32_t {};

constexpr std::uint32_t id_value(ToolId id) noexcept { return static_cast<std::uint32_t>(id); }

enum class ToolCategory { code, search, image, other };

std::string_view to_string(ToolCategory c) noexcept;
ToolCategory category_from_string(std::string_view s);

inline constexpr std::size_t kDefaultDim = 8;

struct ToolSpec {
  ToolId id{};
  std::string name;
  /// Whitespace-separated tokens; the tool's "instruction manual".
  std::string description;
  ToolCategory category = ToolCategory::other;
  /// True competence direction. Simulator-only; left empty on input, the
  /// library derives it from the embedding.
  Vec latent_function;
};

struct ToolEmbedding {
  ToolId tool_id{};
  Vec vector;
};

/// Deterministic hash-projection embedding of name + description.
/// Each whitespace token seeds a unit Gaussian direction; the directions are
/// averaged and renormalized.
ToolEmbedding embed_tool(const ToolSpec& spec, std::uint64_t seed, std::size_t dim);

/// Immutable tool library with a seen/unseen partition. Safe to share across
/// threads; extend_library returns a new value.
class ToolLibrary {
 public:
  ToolLibrary() = default;

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tools_.size(); }

  std::span<const ToolSpec> tools() const noexcept { return tools_; }
  const ToolSpec& tool(ToolId id) const;
  const ToolEmbedding& embedding(ToolId id) const;
  std::span<const double> embedding_vector(ToolId id) const { return embedding(id).vector; }
  std::span<const double> latent(ToolId id) const { return tool(id).latent_function; }

  std::span<const ToolId> seen_ids() const noexcept { return seen_; }
  std::span<const ToolId> unseen_ids() const noexcept { return unseen_; }
  std::vector<ToolId> ids() const;

  bool contains(ToolId id) const { return index_.contains(id); }
  bool is_seen(ToolId id) const;

  /// Row-major dim x dim orthogonal map taking embeddings to latent functions.
  std::span<const double> latent_rotation() const noexcept { return rotation_; }

  nlohmann::ordered_json to_json() const;
  static ToolLibrary from_json(const nlohmann::json& j);

 private:
  friend ToolLibrary build_library(std::vector<ToolSpec>, double, std::uint64_t, std::size_t);
  friend ToolLibrary extend_library(const ToolLibrary&, std::vector<ToolSpec>);

  static ToolLibrary assemble(std::vector<ToolSpec> specs, const std::vector<ToolId>& seen,
                              std::uint64_t seed, std::size_t dim);
  void append(ToolSpec spec);
  std::size_t index_of(ToolId id) const;

  std::uint64_t seed_ = 0;
  std::size_t dim_ = 0;
  std::vector<ToolSpec> tools_;
  std::vector<ToolEmbedding> embeddings_;
  std::map<ToolId, std::size_t> index_;
  std::vector<ToolId> seen_;
  std::vector<ToolId> unseen_;
  Vec rotation_;
};

/// Seeded partition: |seen| = max(1, round(seen_fraction * |specs|)).
ToolLibrary build_library(std::vector<ToolSpec> specs, double seen_fraction, std::uint64_t seed,
                          std::size_t dim = kDefaultDim);

/// Appends new tools as unseen. Existing tools and embeddings are untouched.
ToolLibrary extend_library(const ToolLibrary& lib, std::vector<ToolSpec> new_specs);

/// Synthetic catalog: category-flavoured descriptions over a shared vocabulary.
/// Ids start at `first_id`.
std::vector<ToolSpec> synthesize_tool_specs(std::size_t count, std::uint64_t seed,
                                            std::uint32_t first_id = 0);

}  // namespace autotool

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "serec/common.hpp"

namespace serec {

// Dense first-seen indexing of external string ids.
class IdMap {
 public:
  // Returns the index of `id`, assigning the next free index when unseen.
  Index intern(std::string_view id);
  std::optional<Index> find(std::string_view id) const;
  const std::string& name(Index index) const { return names_.at(static_cast<std::size_t>(index)); }
  Index size() const { return static_cast<Index>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  // Two-column TSV: `index<TAB>id`.
  void save(const std::filesystem::path& path) const;
  static IdMap load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Index> index_;
};

using Pair = std::pair<Index, Index>;

// Sparse binary user x item click matrix. Entries are kept sorted by
// (user, item) with duplicates collapsed, and indexed both ways.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;
  // Throws std::out_of_range on an index outside the shape.
  InteractionMatrix(Index n_users, Index n_items, std::vector<Pair> entries);

  Index n_users() const { return n_users_; }
  Index n_items() const { return n_items_; }
  Index nnz() const { return static_cast<Index>(entries_.size()); }
  const std::vector<Pair>& entries() const { return entries_; }

  std::span<const Index> items_of(Index user) const;
  std::span<const Index> users_of(Index item) const;
  Index item_count(Index item) const { return item_ptr_[item + 1] - item_ptr_[item]; }
  Index user_count(Index user) const { return user_ptr_[user + 1] - user_ptr_[user]; }
  bool contains(Index user, Index item) const;

 private:
  Index n_users_ = 0;
  Index n_items_ = 0;
  std::vector<Pair> entries_;
  std::vector<Index> user_ptr_{0};
  std::vector<Index> user_items_;
  std::vector<Index> item_ptr_{0};
  std::vector<Index> item_users_;
};

// Directed trust graph; an edge (u, k) means u trusts k, so k is in Friends(u).
class SocialGraph {
 public:
  SocialGraph() = default;
  // Drops self loops, collapses duplicates; throws std::out_of_range on bad indices.
  SocialGraph(Index n_users, std::vector<Pair> edges);

  Index n_users() const { return n_users_; }
  Index n_edges() const { return static_cast<Index>(edges_.size()); }
  const std::vector<Pair>& edges() const { return edges_; }
  std::span<const Index> friends(Index user) const;
  Index out_degree(Index user) const { return ptr_[user + 1] - ptr_[user]; }
  bool has_edge(Index user, Index other) const;

 private:
  Index n_users_ = 0;
  std::vector<Pair> edges_;
  std::vector<Index> ptr_{0};
  std::vector<Index> adj_;
};

struct LoadedInteractions {
  InteractionMatrix matrix;
  IdMap users;
  IdMap items;
  std::size_t lines_read = 0;
  std::size_t lines_below_threshold = 0;
};

// Reads `user item [rating]` lines (tab or space separated, `#` comments).
// Lines whose rating is below `min_rating` are skipped; lines without a rating
// always count.
LoadedInteractions load_interactions(const std::filesystem::path& path,
                                     std::optional<double> min_rating = std::nullopt);

// Same format, resolved through fixed id maps. Unknown ids are a parse error.
InteractionMatrix load_interactions(const std::filesystem::path& path, const IdMap& users,
                                    const IdMap& items);

void save_interactions(const std::filesystem::path& path, const InteractionMatrix& y,
                       const IdMap& users, const IdMap& items);

struct LoadedSocial {
  SocialGraph graph;
  std::size_t dropped_self_loops = 0;
  std::size_t dropped_unknown = 0;
  std::size_t duplicates = 0;
};

LoadedSocial load_social(const std::filesystem::path& path, const IdMap& users);
void save_social(const std::filesystem::path& path, const SocialGraph& graph, const IdMap& users);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.2;
};

struct DatasetSplit {
  InteractionMatrix train;
  InteractionMatrix validation;
  InteractionMatrix test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

// Seeded uniform permutation of the entries; floor(train*n) / floor(validation*n)
// / remainder.
DatasetSplit split(const InteractionMatrix& src, SplitRatios ratios, std::uint64_t seed);

struct LoadedSplit {
  DatasetSplit split;
  IdMap users;
  IdMap items;
};

// Layout: train.tsv, validation.tsv, test.tsv, users.tsv, items.tsv, split-meta.json.
void save_split(const std::filesystem::path& dir, const DatasetSplit& split, const IdMap& users,
                const IdMap& items);
LoadedSplit load_split(const std::filesystem::path& dir);

struct StatsReport {
  Index n_users = 0;
  Index n_items = 0;
  Index n_ratings = 0;
  Index n_social_links = 0;
  double rating_density = 0.0;
  double social_density = 0.0;
  double avg_social_links = 0.0;
  double s_impact = 0.0;
};

StatsReport stats_from_counts(Index n_users, Index n_items, Index n_ratings, Index n_social_links);
StatsReport dataset_stats(const InteractionMatrix& y, const SocialGraph& s);
std::string to_json(const StatsReport& report);

// Keeps each edge independently with probability keep_prob.
SocialGraph prune_social(const SocialGraph& graph, double keep_prob, std::uint64_t seed);

}  // namespace serec

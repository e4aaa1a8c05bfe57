#include "serec/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tsv.hpp"

namespace serec {

namespace fs = std::filesystem;
using nlohmann::json;

Index IdMap::intern(std::string_view id) {
  auto [it, inserted] = index_.try_emplace(std::string(id), static_cast<Index>(names_.size()));
  if (inserted) names_.emplace_back(id);
  return it->second;
}

std::optional<Index> IdMap::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void IdMap::save(const fs::path& path) const {
  auto out = tsv::open_out(path);
  for (std::size_t i = 0; i < names_.size(); ++i) out << i << '\t' << names_[i] << '\n';
}

IdMap IdMap::load(const fs::path& path) {
  IdMap map;
  tsv::for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError(path.string(), line, "expected `index id`");
    auto idx = tsv::parse_int(f[0]);
    if (!idx || *idx != map.size()) throw ParseError(path.string(), line, "indices must be dense and ordered");
    if (map.intern(f[1]) != *idx) throw ParseError(path.string(), line, "duplicate id");
  });
  return map;
}

namespace {

// CSR-style adjacency from sorted pairs, keyed on `first`.
void build_index(const std::vector<Pair>& pairs, Index n_rows, bool by_first, std::vector<Index>& ptr,
                 std::vector<Index>& adj) {
  ptr.assign(static_cast<std::size_t>(n_rows) + 1, 0);
  for (const auto& [a, b] : pairs) ++ptr[static_cast<std::size_t>(by_first ? a : b) + 1];
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
  adj.assign(pairs.size(), 0);
  std::vector<Index> fill(ptr.begin(), ptr.end() - 1);
  for (const auto& [a, b] : pairs) {
    const Index row = by_first ? a : b;
    adj[static_cast<std::size_t>(fill[static_cast<std::size_t>(row)]++)] = by_first ? b : a;
  }
}

void check_range(const std::vector<Pair>& pairs, Index n_rows, Index n_cols, const char* what) {
  for (const auto& [a, b] : pairs) {
    if (a < 0 || a >= n_rows || b < 0 || b >= n_cols)
      throw std::out_of_range(std::string(what) + " index (" + std::to_string(a) + ", " +
                              std::to_string(b) + ") outside shape");
  }
}

std::span<const Index> slice(const std::vector<Index>& ptr, const std::vector<Index>& adj, Index row) {
  const auto begin = static_cast<std::size_t>(ptr[static_cast<std::size_t>(row)]);
  const auto end = static_cast<std::size_t>(ptr[static_cast<std::size_t>(row) + 1]);
  return {adj.data() + begin, end - begin};
}

}  // namespace

InteractionMatrix::InteractionMatrix(Index n_users, Index n_items, std::vector<Pair> entries)
    : n_users_(n_users), n_items_(n_items), entries_(std::move(entries)) {
  if (n_users < 0 || n_items < 0) throw std::invalid_argument("negative matrix shape");
  check_range(entries_, n_users_, n_items_, "interaction");
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
  build_index(entries_, n_users_, true, user_ptr_, user_items_);
  build_index(entries_, n_items_, false, item_ptr_, item_users_);
}

std::span<const Index> InteractionMatrix::items_of(Index user) const {
  return slice(user_ptr_, user_items_, user);
}

std::span<const Index> InteractionMatrix::users_of(Index item) const {
  return slice(item_ptr_, item_users_, item);
}

bool InteractionMatrix::contains(Index user, Index item) const {
  auto items = items_of(user);
  return std::binary_search(items.begin(), items.end(), item);
}

SocialGraph::SocialGraph(Index n_users, std::vector<Pair> edges) : n_users_(n_users), edges_(std::move(edges)) {
  if (n_users < 0) throw std::invalid_argument("negative graph size");
  check_range(edges_, n_users_, n_users_, "social edge");
  std::erase_if(edges_, [](const Pair& e) { return e.first == e.second; });
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  build_index(edges_, n_users_, true, ptr_, adj_);
}

std::span<const Index> SocialGraph::friends(Index user) const { return slice(ptr_, adj_, user); }

bool SocialGraph::has_edge(Index user, Index other) const {
  auto f = friends(user);
  return std::binary_search(f.begin(), f.end(), other);
}

namespace {

struct RawRecord {
  std::string_view user;
  std::string_view item;
  std::optional<double> rating;
};

RawRecord parse_interaction(const fs::path& path, std::size_t line, const std::vector<std::string_view>& f) {
  if (f.size() < 2 || f.size() > 3)
    throw ParseError(path.string(), line, "expected `user item [rating]`, got " + std::to_string(f.size()) + " fields");
  RawRecord rec{f[0], f[1], std::nullopt};
  if (f.size() == 3) {
    rec.rating = tsv::parse_double(f[2]);
    if (!rec.rating) throw ParseError(path.string(), line, "rating is not a number: '" + std::string(f[2]) + "'");
  }
  return rec;
}

}  // namespace

LoadedInteractions load_interactions(const fs::path& path, std::optional<double> min_rating) {
  LoadedInteractions out;
  std::vector<Pair> pairs;
  tsv::for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    const auto rec = parse_interaction(path, line, f);
    ++out.lines_read;
    if (min_rating && rec.rating && *rec.rating < *min_rating) {
      ++out.lines_below_threshold;
      return;
    }
    pairs.emplace_back(out.users.intern(rec.user), out.items.intern(rec.item));
  });
  if (out.lines_read == 0) throw ParseError(path.string(), 0, "no interaction records");
  out.matrix = InteractionMatrix(out.users.size(), out.items.size(), std::move(pairs));
  return out;
}

InteractionMatrix load_interactions(const fs::path& path, const IdMap& users, const IdMap& items) {
  std::vector<Pair> pairs;
  tsv::for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    const auto rec = parse_interaction(path, line, f);
    auto u = users.find(rec.user);
    auto i = items.find(rec.item);
    if (!u || !i) throw ParseError(path.string(), line, "id not present in the id map");
    pairs.emplace_back(*u, *i);
  });
  return InteractionMatrix(users.size(), items.size(), std::move(pairs));
}

void save_interactions(const fs::path& path, const InteractionMatrix& y, const IdMap& users, const IdMap& items) {
  auto out = tsv::open_out(path);
  for (const auto& [u, i] : y.entries()) out << users.name(u) << '\t' << items.name(i) << '\n';
}

LoadedSocial load_social(const fs::path& path, const IdMap& users) {
  LoadedSocial out;
  std::vector<Pair> edges;
  tsv::for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() < 2 || f.size() > 3)
      throw ParseError(path.string(), line, "expected `truster trustee`");
    auto u = users.find(f[0]);
    auto k = users.find(f[1]);
    if (!u || !k) {
      ++out.dropped_unknown;
      return;
    }
    if (*u == *k) {
      ++out.dropped_self_loops;
      return;
    }
    edges.emplace_back(*u, *k);
  });
  const auto raw = edges.size();
  out.graph = SocialGraph(users.size(), std::move(edges));
  out.duplicates = raw - static_cast<std::size_t>(out.graph.n_edges());
  return out;
}

void save_social(const fs::path& path, const SocialGraph& graph, const IdMap& users) {
  auto out = tsv::open_out(path);
  for (const auto& [u, k] : graph.edges()) out << users.name(u) << '\t' << users.name(k) << '\n';
}

DatasetSplit split(const InteractionMatrix& src, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.validation > 0.0) || !(ratios.train + ratios.validation < 1.0))
    throw std::invalid_argument("split ratios must be positive with train + validation < 1");
  const auto n = static_cast<std::size_t>(src.nnz());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * static_cast<double>(n)));
  std::vector<Pair> train, val, test;
  train.reserve(n_train);
  val.reserve(n_val);
  test.reserve(n - n_train - n_val);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& e = src.entries()[order[k]];
    if (k < n_train) train.push_back(e);
    else if (k < n_train + n_val) val.push_back(e);
    else test.push_back(e);
  }
  return DatasetSplit{InteractionMatrix(src.n_users(), src.n_items(), std::move(train)),
                      InteractionMatrix(src.n_users(), src.n_items(), std::move(val)),
                      InteractionMatrix(src.n_users(), src.n_items(), std::move(test)), seed, ratios};
}

void save_split(const fs::path& dir, const DatasetSplit& split, const IdMap& users, const IdMap& items) {
  fs::create_directories(dir);
  save_interactions(dir / "train.tsv", split.train, users, items);
  save_interactions(dir / "validation.tsv", split.validation, users, items);
  save_interactions(dir / "test.tsv", split.test, users, items);
  users.save(dir / "users.tsv");
  items.save(dir / "items.tsv");
  json meta = {{"seed", split.seed},
               {"ratios", {{"train", split.ratios.train}, {"validation", split.ratios.validation}}},
               {"n_users", split.train.n_users()},
               {"n_items", split.train.n_items()},
               {"counts",
                {{"train", split.train.nnz()}, {"validation", split.validation.nnz()}, {"test", split.test.nnz()}}}};
  tsv::open_out(dir / "split-meta.json") << meta.dump(2) << '\n';
}

LoadedSplit load_split(const fs::path& dir) {
  LoadedSplit out;
  out.users = IdMap::load(dir / "users.tsv");
  out.items = IdMap::load(dir / "items.tsv");
  out.split.train = load_interactions(dir / "train.tsv", out.users, out.items);
  out.split.validation = load_interactions(dir / "validation.tsv", out.users, out.items);
  out.split.test = load_interactions(dir / "test.tsv", out.users, out.items);
  std::ifstream in(dir / "split-meta.json");
  if (!in) throw ParseError((dir / "split-meta.json").string(), 0, "cannot open file");
  json meta = json::parse(in);
  out.split.seed = meta.at("seed").get<std::uint64_t>();
  out.split.ratios.train = meta.at("ratios").at("train").get<double>();
  out.split.ratios.validation = meta.at("ratios").at("validation").get<double>();
  return out;
}

StatsReport stats_from_counts(Index n_users, Index n_items, Index n_ratings, Index n_social_links) {
  if (n_users <= 0) throw std::invalid_argument("dataset_stats: no users");
  if (n_items <= 0) throw std::invalid_argument("dataset_stats: no items");
  StatsReport r;
  r.n_users = n_users;
  r.n_items = n_items;
  r.n_ratings = n_ratings;
  r.n_social_links = n_social_links;
  const double u = static_cast<double>(n_users);
  r.rating_density = static_cast<double>(n_ratings) / (u * static_cast<double>(n_items));
  r.social_density = static_cast<double>(n_social_links) / (u * u);
  r.avg_social_links = static_cast<double>(n_social_links) / u;
  r.s_impact = r.avg_social_links * r.rating_density;
  return r;
}

StatsReport dataset_stats(const InteractionMatrix& y, const SocialGraph& s) {
  if (y.n_users() != s.n_users()) throw std::invalid_argument("dataset_stats: user counts differ");
  return stats_from_counts(y.n_users(), y.n_items(), y.nnz(), s.n_edges());
}

std::string to_json(const StatsReport& r) {
  json j = {{"n_users", r.n_users},
            {"n_items", r.n_items},
            {"n_ratings", r.n_ratings},
            {"n_social_links", r.n_social_links},
            {"rating_density", r.rating_density},
            {"social_density", r.social_density},
            {"avg_social_links", r.avg_social_links},
            {"s_impact", r.s_impact}};
  return j.dump(2);
}

SocialGraph prune_social(const SocialGraph& graph, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob >= 0.0 && keep_prob <= 1.0)) throw std::invalid_argument("keep_prob must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Pair> kept;
  kept.reserve(static_cast<std::size_t>(static_cast<double>(graph.n_edges()) * keep_prob) + 1);
  for (const auto& e : graph.edges()) {
    if (unit(rng) < keep_prob) kept.push_back(e);
  }
  return SocialGraph(graph.n_users(), std::move(kept));
}

}  // namespace serec

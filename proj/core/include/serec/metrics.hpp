#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "serec/data.hpp"
#include "serec/rating_core.hpp"

namespace serec {

struct RankedList {
  Index user = 0;
  std::vector<Index> items;  // best first
};

// Top-n items by descending score, ties broken by ascending item index.
// `excluded` is a sorted list of item indices to leave out.
RankedList rank_items(std::span<const double> scores, std::span<const Index> excluded, Index n, Index user = 0);

// Binary-relevance metrics over the first k ranked items. `relevant` must be
// sorted; an empty relevant set yields nullopt (the user is skipped).
std::optional<double> recall_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k);
std::optional<double> map_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k);
std::optional<double> ndcg_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k);

enum class EvalTarget { validation, test };

struct MetricSummary {
  std::map<std::string, double> metrics;  // "recall@10", "map@100", ...
  Index n_users = 0;
};

struct EvalReport {
  std::string model;
  std::map<std::string, double> metrics;
  Index n_users_evaluated = 0;
  // Optional breakdown, in bucket order.
  std::vector<std::pair<std::string, MetricSummary>> groups;
};

struct FriendBucket {
  std::string label;
  Index min_degree;
  Index max_degree;  // inclusive
};

// {0, 1-5, 6-15, 15+}; "15+" means out-degree >= 16.
std::vector<FriendBucket> default_friend_buckets();

// Partitions users by out-degree. Throws std::invalid_argument when buckets
// overlap or leave some user's degree uncovered.
std::vector<std::pair<std::string, std::vector<Index>>> group_by_friends(const SocialGraph& graph,
                                                                         const std::vector<FriendBucket>& buckets);

using UserGroups = std::vector<std::pair<std::string, std::vector<Index>>>;

// Ranks every user's items by theta_u . beta_i, excluding train items (and
// validation items when scoring the test target), and averages recall, MAP
// and NDCG at each cutoff over users with at least one target item.
// Throws std::runtime_error when no user can be evaluated.
EvalReport evaluate(const FactorModel& model, const DatasetSplit& split, EvalTarget target,
                    const std::vector<Index>& cutoffs, const UserGroups* groups = nullptr);

// Same protocol over an arbitrary score provider (used by oracles and tests).
EvalReport evaluate_scores(const std::function<Vector(Index)>& scores, const DatasetSplit& split, EvalTarget target,
                           const std::vector<Index>& cutoffs, const UserGroups* groups = nullptr);

std::string to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

// Aligned text table: one row per metric, one column per model.
std::string format_table(const std::vector<EvalReport>& reports, const std::vector<std::string>& metric_keys = {});

// recall@k, map@k, ndcg@k for every cutoff, in that order.
std::vector<std::string> metric_keys(const std::vector<Index>& cutoffs);

}  // namespace serec

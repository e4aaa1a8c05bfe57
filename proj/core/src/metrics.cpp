#include "serec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace serec {

namespace {

bool is_relevant(std::span<const Index> relevant, Index item) {
  return std::binary_search(relevant.begin(), relevant.end(), item);
}

Index top(const RankedList& ranked, Index k) { return std::min<Index>(k, static_cast<Index>(ranked.items.size())); }

}  // namespace

RankedList rank_items(std::span<const double> scores, std::span<const Index> excluded, Index n, Index user) {
  if (n < 1) throw std::invalid_argument("rank_items: cutoff must be >= 1");
  RankedList out;
  out.user = user;
  const Index V = static_cast<Index>(scores.size());
  std::vector<Index> candidates;
  candidates.reserve(scores.size());
  std::size_t e = 0;
  for (Index i = 0; i < V; ++i) {
    while (e < excluded.size() && excluded[e] < i) ++e;
    if (e < excluded.size() && excluded[e] == i) continue;
    candidates.push_back(i);
  }
  auto key = [&](Index i) {
    const double s = scores[static_cast<std::size_t>(i)];
    return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
  };
  const auto keep = static_cast<std::size_t>(std::min<Index>(n, static_cast<Index>(candidates.size())));
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                    [&](Index a, Index b) {
                      const double sa = key(a), sb = key(b);
                      return sa > sb || (sa == sb && a < b);
                    });
  candidates.resize(keep);
  out.items = std::move(candidates);
  return out;
}

std::optional<double> recall_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k) {
  if (relevant.empty()) return std::nullopt;
  Index hits = 0;
  for (Index r = 0; r < top(ranked, k); ++r) hits += is_relevant(relevant, ranked.items[static_cast<std::size_t>(r)]);
  return static_cast<double>(hits) / static_cast<double>(std::min<Index>(k, static_cast<Index>(relevant.size())));
}

std::optional<double> map_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k) {
  if (relevant.empty()) return std::nullopt;
  Index hits = 0;
  double sum = 0.0;
  for (Index r = 0; r < top(ranked, k); ++r) {
    if (is_relevant(relevant, ranked.items[static_cast<std::size_t>(r)])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min<Index>(k, static_cast<Index>(relevant.size())));
}

std::optional<double> ndcg_at_k(const RankedList& ranked, std::span<const Index> relevant, Index k) {
  if (relevant.empty()) return std::nullopt;
  double dcg = 0.0;
  for (Index r = 0; r < top(ranked, k); ++r) {
    if (is_relevant(relevant, ranked.items[static_cast<std::size_t>(r)]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  const Index ideal = std::min<Index>(k, static_cast<Index>(relevant.size()));
  for (Index r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

std::vector<FriendBucket> default_friend_buckets() {
  return {{"0", 0, 0}, {"1-5", 1, 5}, {"6-15", 6, 15}, {"15+", 16, std::numeric_limits<Index>::max()}};
}

UserGroups group_by_friends(const SocialGraph& graph, const std::vector<FriendBucket>& buckets) {
  for (std::size_t a = 0; a < buckets.size(); ++a) {
    if (buckets[a].min_degree > buckets[a].max_degree)
      throw std::invalid_argument("friend bucket '" + buckets[a].label + "' is empty");
    for (std::size_t b = a + 1; b < buckets.size(); ++b) {
      if (buckets[a].min_degree <= buckets[b].max_degree && buckets[b].min_degree <= buckets[a].max_degree)
        throw std::invalid_argument("friend buckets '" + buckets[a].label + "' and '" + buckets[b].label +
                                    "' overlap");
    }
  }
  UserGroups groups;
  for (const auto& b : buckets) groups.emplace_back(b.label, std::vector<Index>{});
  for (Index u = 0; u < graph.n_users(); ++u) {
    const Index d = graph.out_degree(u);
    auto it = std::find_if(buckets.begin(), buckets.end(),
                           [d](const FriendBucket& b) { return d >= b.min_degree && d <= b.max_degree; });
    if (it == buckets.end())
      throw std::invalid_argument("no friend bucket covers out-degree " + std::to_string(d));
    groups[static_cast<std::size_t>(it - buckets.begin())].second.push_back(u);
  }
  return groups;
}

std::vector<std::string> metric_keys(const std::vector<Index>& cutoffs) {
  std::vector<std::string> keys;
  for (const char* name : {"recall", "map", "ndcg"})
    for (Index k : cutoffs) keys.push_back(std::string(name) + "@" + std::to_string(k));
  return keys;
}

EvalReport evaluate_scores(const std::function<Vector(Index)>& scores, const DatasetSplit& split, EvalTarget target,
                           const std::vector<Index>& cutoffs, const UserGroups* groups) {
  if (cutoffs.empty()) throw std::invalid_argument("evaluate: no cutoffs");
  const InteractionMatrix& goal = target == EvalTarget::test ? split.test : split.validation;
  const Index U = goal.n_users();
  const Index max_k = *std::max_element(cutoffs.begin(), cutoffs.end());
  const auto keys = metric_keys(cutoffs);
  const std::size_t n_keys = keys.size();

  // Row u holds that user's metric values; NaN marks a skipped user.
  Matrix per_user(U, static_cast<Index>(n_keys));
  auto score_user = [&](Index u) {
    const auto relevant = goal.items_of(u);
    if (relevant.empty()) {
      per_user.row(u).setConstant(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    std::vector<Index> excluded(split.train.items_of(u).begin(), split.train.items_of(u).end());
    if (target == EvalTarget::test) {
      auto val = split.validation.items_of(u);
      excluded.insert(excluded.end(), val.begin(), val.end());
      std::sort(excluded.begin(), excluded.end());
    }
    const Vector s = scores(u);
    if (s.size() != goal.n_items()) throw std::invalid_argument("evaluate: score vector has the wrong length");
    const RankedList ranked = rank_items(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                         excluded, max_k, u);
    Index col = 0;
    for (Index k : cutoffs) per_user(u, col++) = *recall_at_k(ranked, relevant, k);
    for (Index k : cutoffs) per_user(u, col++) = *map_at_k(ranked, relevant, k);
    for (Index k : cutoffs) per_user(u, col++) = *ndcg_at_k(ranked, relevant, k);
  };

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index u = 0; u < U; ++u) {
    try {
      score_user(u);
    } catch (...) {
#pragma omp critical(serec_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  auto summarize = [&](auto&& users) {
    MetricSummary out;
    std::vector<double> sums(n_keys, 0.0);
    for (Index u : users) {
      if (std::isnan(per_user(u, 0))) continue;
      ++out.n_users;
      for (std::size_t c = 0; c < n_keys; ++c) sums[c] += per_user(u, static_cast<Index>(c));
    }
    for (std::size_t c = 0; c < n_keys; ++c)
      out.metrics[keys[c]] = out.n_users ? sums[c] / static_cast<double>(out.n_users) : 0.0;
    return out;
  };

  std::vector<Index> all(static_cast<std::size_t>(U));
  for (Index u = 0; u < U; ++u) all[static_cast<std::size_t>(u)] = u;
  MetricSummary overall = summarize(all);
  if (overall.n_users == 0) throw std::runtime_error("evaluate: no user has items in the target split");

  EvalReport report;
  report.metrics = std::move(overall.metrics);
  report.n_users_evaluated = overall.n_users;
  if (groups) {
    for (const auto& [label, users] : *groups) {
      MetricSummary g = summarize(users);
      if (g.n_users > 0) report.groups.emplace_back(label, std::move(g));
    }
  }
  return report;
}

EvalReport evaluate(const FactorModel& model, const DatasetSplit& split, EvalTarget target,
                    const std::vector<Index>& cutoffs, const UserGroups* groups) {
  if (model.n_users() != split.train.n_users() || model.n_items() != split.train.n_items())
    throw std::invalid_argument("evaluate: model shape " + std::to_string(model.n_users()) + "x" +
                                std::to_string(model.n_items()) + " does not match split " +
                                std::to_string(split.train.n_users()) + "x" + std::to_string(split.train.n_items()));
  return evaluate_scores([&](Index u) { return predict_scores(model, u); }, split, target, cutoffs, groups);
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["n_users_evaluated"] = report.n_users_evaluated;
  j["metrics"] = report.metrics;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& [label, g] : report.groups)
    groups.push_back({{"group", label}, {"n_users", g.n_users}, {"metrics", g.metrics}});
  j["groups"] = groups;
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.model = j.value("model", "");
  r.n_users_evaluated = j.at("n_users_evaluated").get<Index>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  if (j.contains("groups")) {
    for (const auto& g : j.at("groups")) {
      MetricSummary s;
      s.n_users = g.at("n_users").get<Index>();
      s.metrics = g.at("metrics").get<std::map<std::string, double>>();
      r.groups.emplace_back(g.at("group").get<std::string>(), std::move(s));
    }
  }
  return r;
}

std::string format_table(const std::vector<EvalReport>& reports, const std::vector<std::string>& metric_keys_in) {
  std::vector<std::string> keys = metric_keys_in;
  if (keys.empty() && !reports.empty())
    for (const auto& [k, v] : reports.front().metrics) keys.push_back(k);
  std::size_t first = 6;
  for (const auto& k : keys) first = std::max(first, k.size());
  std::vector<std::size_t> widths;
  for (const auto& r : reports) widths.push_back(std::max<std::size_t>(8, r.model.size()));

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(first)) << "metric";
  for (std::size_t c = 0; c < reports.size(); ++c)
    out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << reports[c].model;
  out << '\n';
  for (const auto& k : keys) {
    out << std::left << std::setw(static_cast<int>(first)) << k;
    for (std::size_t c = 0; c < reports.size(); ++c) {
      auto it = reports[c].metrics.find(k);
      std::ostringstream cell;
      if (it == reports[c].metrics.end()) cell << "-";
      else cell << std::fixed << std::setprecision(4) << it->second;
      out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace serec

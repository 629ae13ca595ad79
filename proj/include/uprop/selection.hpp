#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/dataset.hpp"
#include "uprop/errors.hpp"
#include "uprop/models/surrogate.hpp"
#include "uprop/rng.hpp"

namespace uprop {

/// n indices drawn uniformly without replacement; deterministic given seed.
inline std::vector<Index> select_random(const std::vector<Index>& pool, Index n,
                                        std::uint64_t seed) {
  if (n > static_cast<Index>(pool.size()))
    throw UsageError("select_random: n exceeds pool size");
  std::vector<Index> shuffled = pool;
  CounterRng rng(seed);
  for (size_t i = 0; i + 1 < shuffled.size(); ++i) {
    const size_t j = static_cast<size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i),
                        static_cast<std::int64_t>(shuffled.size()) - 1));
    std::swap(shuffled[i], shuffled[j]);
  }
  shuffled.resize(static_cast<size_t>(n));
  std::sort(shuffled.begin(), shuffled.end());
  return shuffled;
}

/// Index with the largest recorded k-hat; ties go to the lowest index.
inline Index select_max_khat(const std::vector<Index>& pool,
                             const std::map<Index, double>& khat_by_index) {
  if (pool.empty()) throw UsageError("select_max_khat: empty pool");
  Index best = -1;
  double best_k = 0.0;
  for (Index i : pool) {
    const auto it = khat_by_index.find(i);
    if (it == khat_by_index.end())
      throw UsageError("select_max_khat: missing k-hat for index " + std::to_string(i));
    if (best < 0 || it->second > best_k || (it->second == best_k && i < best)) {
      best_k = it->second;
      best = i;
    }
  }
  return best;
}

namespace detail {

/// Minimum spanning tree over a dense symmetric distance matrix (Prim).
/// Ties resolve lexicographically on the normalized node pair, so the tree is
/// deterministic. Returns the edge list.
inline std::vector<std::pair<Index, Index>> minimum_spanning_tree(const Matrix& dist) {
  const Index n = dist.rows();
  std::vector<bool> in_tree(static_cast<size_t>(n), false);
  std::vector<double> best_d(static_cast<size_t>(n),
                             std::numeric_limits<double>::infinity());
  std::vector<Index> best_from(static_cast<size_t>(n), -1);
  std::vector<std::pair<Index, Index>> edges;
  in_tree[0] = true;
  for (Index j = 1; j < n; ++j) {
    best_d[static_cast<size_t>(j)] = dist(0, j);
    best_from[static_cast<size_t>(j)] = 0;
  }
  for (Index step = 1; step < n; ++step) {
    Index pick = -1;
    for (Index j = 0; j < n; ++j) {
      if (in_tree[static_cast<size_t>(j)]) continue;
      if (pick < 0) {
        pick = j;
        continue;
      }
      const auto key = [&](Index v) {
        const Index a = std::min(best_from[static_cast<size_t>(v)], v);
        const Index b = std::max(best_from[static_cast<size_t>(v)], v);
        return std::make_tuple(best_d[static_cast<size_t>(v)], a, b);
      };
      if (key(j) < key(pick)) pick = j;
    }
    in_tree[static_cast<size_t>(pick)] = true;
    edges.emplace_back(best_from[static_cast<size_t>(pick)], pick);
    for (Index j = 0; j < n; ++j) {
      if (in_tree[static_cast<size_t>(j)]) continue;
      const double d = dist(pick, j);
      const size_t sj = static_cast<size_t>(j);
      if (d < best_d[sj] ||
          (d == best_d[sj] &&
           std::make_pair(std::min(pick, j), std::max(pick, j)) <
               std::make_pair(std::min(best_from[sj], j), std::max(best_from[sj], j)))) {
        best_d[sj] = d;
        best_from[sj] = pick;
      }
    }
  }
  return edges;
}

}  // namespace detail

/// Friedman-Rafsky dissimilarity between two equally sized row sets: pool the
/// rows, build the Euclidean MST and count edges R joining rows from
/// different sets. Returns 1 - R / (2N - 1), so interleaved samples map to 0
/// and well-separated samples approach 1. Exactly duplicated pooled rows are
/// perturbed by a deterministic 1e-12 jitter keyed on the row index.
inline double friedman_rafsky_dissimilarity(const Matrix& a, const Matrix& b) {
  if (a.rows() < 1 || b.rows() < 1) throw UsageError("friedman_rafsky: empty dataset");
  if (a.cols() != b.cols() || a.rows() != b.rows())
    throw UsageError("friedman_rafsky: shape mismatch");
  const Index n = a.rows();
  Matrix pooled(2 * n, a.cols());
  pooled.topRows(n) = a;
  pooled.bottomRows(n) = b;
  for (Index i = 0; i < 2 * n; ++i) pooled(i, 0) += 1e-12 * static_cast<double>(i);

  Matrix dist(2 * n, 2 * n);
  for (Index i = 0; i < 2 * n; ++i) {
    dist(i, i) = 0.0;
    for (Index j = i + 1; j < 2 * n; ++j) {
      const double d = (pooled.row(i) - pooled.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  Index crossings = 0;
  for (const auto& [u, v] : detail::minimum_spanning_tree(dist)) {
    if ((u < n) != (v < n)) ++crossings;
  }
  return 1.0 - static_cast<double>(crossings) / static_cast<double>(2 * n - 1);
}

inline double friedman_rafsky_dissimilarity(const Dataset& a, const Dataset& b) {
  if (!a.complete() || !b.complete())
    throw UsageError("friedman_rafsky: datasets must be complete");
  if (a.columns != b.columns) throw UsageError("friedman_rafsky: column mismatch");
  return friedman_rafsky_dissimilarity(a.values, b.values);
}

/// Pairwise dissimilarity of imputed datasets, restricted to the rows that
/// can actually differ (rows with original missingness).
inline Matrix fr_dissimilarity_matrix(const std::vector<Dataset>& imputed,
                                      const std::vector<Index>& rows) {
  const Index m = static_cast<Index>(imputed.size());
  auto restrict_rows = [&](const Dataset& d) {
    Matrix out(static_cast<Index>(rows.size()), d.cols());
    for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = d.values.row(rows[r]);
    return out;
  };
  std::vector<Matrix> restricted;
  restricted.reserve(static_cast<size_t>(m));
  for (const auto& d : imputed) restricted.push_back(restrict_rows(d));
  Matrix dist = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      const double d = friedman_rafsky_dissimilarity(restricted[static_cast<size_t>(i)],
                                                     restricted[static_cast<size_t>(j)]);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

/// PAM-style k-medoids (greedy build followed by best-improvement swaps) on a
/// symmetric distance matrix. Fully deterministic; the seed parameter is kept
/// for interface stability but the build/swap path needs no randomness.
inline std::vector<Index> k_medoids(const Matrix& dist, Index k, std::uint64_t /*seed*/ = 0) {
  const Index m = dist.rows();
  if (dist.cols() != m) throw UsageError("k_medoids: distance matrix not square");
  if (k < 1 || k > m) throw UsageError("k_medoids: k out of range");
  if (k == m) {
    std::vector<Index> all(static_cast<size_t>(m));
    std::iota(all.begin(), all.end(), Index{0});
    return all;
  }
  if (k == 1) {
    Index best = 0;
    double best_sum = dist.row(0).sum();
    for (Index i = 1; i < m; ++i) {
      const double s = dist.row(i).sum();
      if (s < best_sum) {
        best_sum = s;
        best = i;
      }
    }
    return {best};
  }

  std::vector<Index> medoids;
  std::vector<double> nearest(static_cast<size_t>(m),
                              std::numeric_limits<double>::infinity());
  auto cost_with = [&](Index cand) {
    double total = 0.0;
    for (Index i = 0; i < m; ++i)
      total += std::min(nearest[static_cast<size_t>(i)], dist(i, cand));
    return total;
  };
  // BUILD
  while (static_cast<Index>(medoids.size()) < k) {
    Index best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (Index cand = 0; cand < m; ++cand) {
      if (std::find(medoids.begin(), medoids.end(), cand) != medoids.end()) continue;
      const double c = cost_with(cand);
      if (c < best_cost) {
        best_cost = c;
        best = cand;
      }
    }
    medoids.push_back(best);
    for (Index i = 0; i < m; ++i)
      nearest[static_cast<size_t>(i)] = std::min(nearest[static_cast<size_t>(i)], dist(i, best));
  }
  // SWAP
  auto total_cost = [&](const std::vector<Index>& meds) {
    double total = 0.0;
    for (Index i = 0; i < m; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (Index mm : meds) d = std::min(d, dist(i, mm));
      total += d;
    }
    return total;
  };
  double current = total_cost(medoids);
  for (bool improved = true; improved;) {
    improved = false;
    Index swap_out = -1, swap_in = -1;
    double best_cost = current;
    for (size_t mi = 0; mi < medoids.size(); ++mi) {
      for (Index h = 0; h < m; ++h) {
        if (std::find(medoids.begin(), medoids.end(), h) != medoids.end()) continue;
        std::vector<Index> trial = medoids;
        trial[mi] = h;
        const double c = total_cost(trial);
        if (c < best_cost) {
          best_cost = c;
          swap_out = static_cast<Index>(mi);
          swap_in = h;
        }
      }
    }
    if (swap_out >= 0) {
      medoids[static_cast<size_t>(swap_out)] = swap_in;
      current = best_cost;
      improved = true;
    }
  }
  std::sort(medoids.begin(), medoids.end());
  return medoids;
}

/// Rank the surrogate parameter draws by their prior-averaged log likelihood
/// and pick evenly spaced quantiles including the minimum and maximum
/// (n = 1 picks the median). Nearest-rank convention; ties keep the lowest
/// index.
inline std::vector<Index> select_by_loglik_quantiles(const Vector& lbar,
                                                     const std::vector<Index>& pool,
                                                     Index n_mix) {
  if (n_mix < 1 || n_mix > static_cast<Index>(pool.size()))
    throw UsageError("select_by_loglik_quantiles: n_mix out of range");
  bool any_finite = false;
  for (Index i : pool) any_finite = any_finite || std::isfinite(lbar[i]);
  if (!any_finite)
    throw SelectionError("select_by_loglik_quantiles: no finite average log likelihood");

  std::vector<Index> order = pool;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (lbar[a] != lbar[b]) return lbar[a] < lbar[b];
    return a < b;
  });
  const Index len = static_cast<Index>(order.size());
  auto rank_at = [&](double q) {
    if (q <= 0.0) return Index{1};
    return static_cast<Index>(std::ceil(q * static_cast<double>(len)));
  };
  std::vector<Index> picks;
  if (n_mix == 1) {
    picks.push_back(order[static_cast<size_t>(rank_at(0.5) - 1)]);
  } else {
    for (Index t = 0; t < n_mix; ++t) {
      const double q = static_cast<double>(t) / static_cast<double>(n_mix - 1);
      picks.push_back(order[static_cast<size_t>(rank_at(q) - 1)]);
    }
  }
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  // Refill collisions with unused pool members in rank order.
  for (const Index idx : order) {
    if (static_cast<Index>(picks.size()) >= n_mix) break;
    if (std::find(picks.begin(), picks.end(), idx) == picks.end()) picks.push_back(idx);
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

/// Prior-averaged log likelihood per surrogate draw, L-bar in the selection
/// rule. Evaluations run through the family and are tallied there.
inline Vector loglik_quantile_scores(const SurrogateInferenceFamily& family, Index j_draws,
                                     std::uint64_t seed) {
  CounterRng rng(seed);
  DrawMatrix prior_draws(j_draws, family.dim());
  for (Index j = 0; j < j_draws; ++j)
    prior_draws.row(j) = family.sample_prior_unconstrained(rng).transpose();
  Vector lbar(family.num_targets());
  for (Index i = 0; i < family.num_targets(); ++i)
    lbar[i] = family.loglik_sum_batch(i, prior_draws, nullptr).mean();
  return lbar;
}

/// Pluggable selection strategy for the orchestrator.
class Selector {
 public:
  virtual ~Selector() = default;
  virtual std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                                    const std::map<Index, double>& khat_prev) = 0;
  virtual std::string name() const = 0;
};

class RandomSelector : public Selector {
 public:
  explicit RandomSelector(std::uint64_t seed) : rng_(seed) {}
  std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                            const std::map<Index, double>&) override {
    return select_random(remaining, n, rng_.next_u64());
  }
  std::string name() const override { return "random"; }

 private:
  CounterRng rng_;
};

class MedoidsSelector : public Selector {
 public:
  explicit MedoidsSelector(Matrix dissimilarity) : dist_(std::move(dissimilarity)) {}
  std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                            const std::map<Index, double>&) override {
    Matrix sub(static_cast<Index>(remaining.size()), static_cast<Index>(remaining.size()));
    for (size_t i = 0; i < remaining.size(); ++i)
      for (size_t j = 0; j < remaining.size(); ++j)
        sub(static_cast<Index>(i), static_cast<Index>(j)) = dist_(remaining[i], remaining[j]);
    std::vector<Index> out;
    for (Index local : k_medoids(sub, n)) out.push_back(remaining[static_cast<size_t>(local)]);
    return out;
  }
  std::string name() const override { return "medoids"; }

 private:
  Matrix dist_;
};

/// Highest k-hat from the previous iteration; falls back to another strategy
/// on the first round when no diagnostics exist yet.
class MaxKhatSelector : public Selector {
 public:
  explicit MaxKhatSelector(std::unique_ptr<Selector> first_round)
      : first_round_(std::move(first_round)) {}
  std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                            const std::map<Index, double>& khat_prev) override {
    bool have_all = !khat_prev.empty();
    for (Index i : remaining) have_all = have_all && khat_prev.count(i) > 0;
    if (!have_all) return first_round_->select(remaining, n, khat_prev);
    std::vector<Index> order = remaining;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      const double ka = khat_prev.at(a), kb = khat_prev.at(b);
      if (ka != kb) return ka > kb;
      return a < b;
    });
    order.resize(static_cast<size_t>(std::min<Index>(n, static_cast<Index>(order.size()))));
    std::sort(order.begin(), order.end());
    return order;
  }
  std::string name() const override { return "max_khat"; }

 private:
  std::unique_ptr<Selector> first_round_;
};

class LoglikQuantileSelector : public Selector {
 public:
  LoglikQuantileSelector(const SurrogateInferenceFamily& family, Index j_draws,
                         std::uint64_t seed)
      : family_(family), j_draws_(j_draws), seed_(seed) {}
  std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                            const std::map<Index, double>&) override {
    if (lbar_.size() == 0) lbar_ = loglik_quantile_scores(family_, j_draws_, seed_);
    return select_by_loglik_quantiles(lbar_, remaining, n);
  }
  std::string name() const override { return "loglik_quantile"; }

 private:
  const SurrogateInferenceFamily& family_;
  Index j_draws_;
  std::uint64_t seed_;
  Vector lbar_;
};

/// The summary-statistic strategy the iterative algorithm must avoid: the
/// mean of the remaining draws is almost never itself a member, which stalls
/// the index set and loops forever. Guarded here so it fails fast instead.
class MeanMemberSelector : public Selector {
 public:
  explicit MeanMemberSelector(DrawMatrix taus) : taus_(std::move(taus)) {}
  std::vector<Index> select(const std::vector<Index>& remaining, Index n,
                            const std::map<Index, double>&) override {
    if (n != 1) throw SelectionError("mean selector picks a single value");
    Vector mean = Vector::Zero(taus_.cols());
    for (Index i : remaining) mean += taus_.row(i).transpose();
    mean /= static_cast<double>(remaining.size());
    for (Index i : remaining) {
      if ((taus_.row(i).transpose() - mean).lpNorm<Eigen::Infinity>() == 0.0) return {i};
    }
    throw SelectionError(
        "mean of remaining draws is not a member of the index set; selecting it "
        "would keep the set unchanged and loop forever");
  }
  std::string name() const override { return "mean_member"; }

 private:
  DrawMatrix taus_;
};

}  // namespace uprop

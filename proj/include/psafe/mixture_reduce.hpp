// Greedy pairwise reduction of Gaussian mixtures with moment-matched merges.
#pragma once

#include "psafe/gaussian.hpp"

#include <queue>
#include <set>

namespace psafe {

/// Moment-matched merge of two positively weighted components.
template <int Dim>
GaussianComponent<Dim> moment_merge(const GaussianComponent<Dim>& a, const GaussianComponent<Dim>& b) {
  GaussianComponent<Dim> c;
  c.weight = a.weight + b.weight;
  const double fa = a.weight / c.weight;
  const double fb = b.weight / c.weight;
  c.mean = fa * a.mean + fb * b.mean;
  const Vec<Dim> da = a.mean - c.mean;
  const Vec<Dim> db = b.mean - c.mean;
  c.cov = regularize_cov<Mat<Dim>>(fa * (a.cov + da * da.transpose()) + fb * (b.cov + db * db.transpose()));
  return c;
}

/// Squared L2 distance between w_a N_a + w_b N_b and its moment-matched merge.
template <int Dim>
double merge_cost(const GaussianComponent<Dim>& a, const GaussianComponent<Dim>& b) {
  const auto c = moment_merge(a, b);
  const double aa = a.weight * a.weight * overlap(a, a);
  const double bb = b.weight * b.weight * overlap(b, b);
  const double cc = c.weight * c.weight * overlap(c, c);
  const double ab = a.weight * b.weight * overlap(a, b);
  const double ac = a.weight * c.weight * overlap(a, c);
  const double bc = b.weight * c.weight * overlap(b, c);
  return std::max(0.0, aa + bb + cc + 2.0 * ab - 2.0 * ac - 2.0 * bc);
}

namespace detail {

struct MergeCandidate {
  double cost;
  std::size_t i, j;
  std::uint32_t ver_i, ver_j;
  bool operator>(const MergeCandidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (i != o.i) return i > o.i;
    return j > o.j;
  }
};

template <int Dim>
void reduce_list(std::vector<GaussianComponent<Dim>>& comps, std::size_t cap, std::size_t exact_limit,
                 std::size_t neighbours) {
  std::erase_if(comps, [](const GaussianComponent<Dim>& c) { return c.weight == 0.0; });
  if (comps.size() <= cap) return;
  for (const auto& c : comps)
    require(c.weight > 0.0, "mixture_reduce: merging requires positive weights");

  const std::size_t n0 = comps.size();
  std::vector<bool> alive(n0, true);
  std::vector<std::uint32_t> ver(n0, 0);
  std::size_t n_alive = n0;
  using Heap = std::priority_queue<MergeCandidate, std::vector<MergeCandidate>, std::greater<>>;
  Heap heap;

  auto push = [&](std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    heap.push({merge_cost(comps[i], comps[j]), i, j, ver[i], ver[j]});
  };
  // Live components ordered by the first coordinate of their mean.
  std::set<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < n0; ++i) order.emplace(comps[i].mean(0), i);
  // Candidate partners of i: every live component, or the k nearest along the
  // first mean coordinate when the list is long (exact k nearest by mean in one dimension).
  auto partners = [&](std::size_t i) {
    std::vector<std::size_t> idx;
    if (n_alive <= exact_limit) {
      for (std::size_t j = 0; j < comps.size(); ++j)
        if (j != i && alive[j]) idx.push_back(j);
      return idx;
    }
    const double key = comps[i].mean(0);
    auto it = order.find({key, i});
    auto lo = std::make_reverse_iterator(it);
    auto hi = std::next(it);
    while (idx.size() < neighbours && (lo != order.rend() || hi != order.end())) {
      const bool take_lo = hi == order.end() || (lo != order.rend() && key - lo->first <= hi->first - key);
      if (take_lo) idx.push_back((lo++)->second);
      else idx.push_back((hi++)->second);
    }
    return idx;
  };
  auto rebuild = [&]() {
    heap = Heap();
    if (n_alive <= exact_limit) {
      for (std::size_t i = 0; i < comps.size(); ++i)
        if (alive[i])
          for (std::size_t j = i + 1; j < comps.size(); ++j)
            if (alive[j]) push(i, j);
    } else {
      for (std::size_t i = 0; i < comps.size(); ++i)
        if (alive[i])
          for (auto j : partners(i)) push(i, j);
    }
  };
  rebuild();
  while (n_alive > cap) {
    if (heap.empty()) rebuild();
    const auto top = heap.top();
    heap.pop();
    if (!alive[top.i] || !alive[top.j] || ver[top.i] != top.ver_i || ver[top.j] != top.ver_j) continue;
    order.erase({comps[top.i].mean(0), top.i});
    order.erase({comps[top.j].mean(0), top.j});
    comps[top.i] = moment_merge(comps[top.i], comps[top.j]);
    order.emplace(comps[top.i].mean(0), top.i);
    ++ver[top.i];
    alive[top.j] = false;
    --n_alive;
    if (n_alive <= cap) break;
    for (auto j : partners(top.i)) push(top.i, j);
  }
  std::vector<GaussianComponent<Dim>> out;
  out.reserve(n_alive);
  for (std::size_t i = 0; i < comps.size(); ++i)
    if (alive[i]) out.push_back(std::move(comps[i]));
  comps = std::move(out);
}

}  // namespace detail

struct ReduceOptions {
  std::size_t cap = 30;
  /// Above this many components, merge candidates are restricted to nearest neighbours by mean.
  std::size_t exact_limit = 64;
  std::size_t neighbours = 12;
};

/// Reduces each mode to at most `cap` components. Per-mode total weight is conserved.
template <int Dim>
void mixture_reduce_inplace(ModeMixture<Dim>& mix, const ReduceOptions& opt) {
  require(opt.cap >= 1, "mixture_reduce: cap must be at least 1");
  for (auto& m : mix.modes) detail::reduce_list(m, opt.cap, opt.exact_limit, opt.neighbours);
}

template <int Dim>
ModeMixture<Dim> mixture_reduce(ModeMixture<Dim> mix, std::size_t cap) {
  ReduceOptions opt;
  opt.cap = cap;
  mixture_reduce_inplace(mix, opt);
  return mix;
}

}  // namespace psafe

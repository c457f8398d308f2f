// Uniform partition of the expanded observation region, shared by both abstractions.
#pragma once

#include "psafe/model.hpp"

namespace psafe {

/// Cells of a uniform axis-aligned partition of one box.
struct UniformPartition {
  Box box;
  std::vector<int> counts;  // cells per axis
  VecX edge;                // cell edge length per axis

  int size() const {
    int n = 1;
    for (int c : counts) n *= c;
    return n;
  }
  std::vector<int> unravel(int i) const {
    std::vector<int> idx(counts.size());
    for (std::size_t a = 0; a < counts.size(); ++a) {
      idx[a] = i % counts[a];
      i /= counts[a];
    }
    return idx;
  }
  Box cell(int i) const {
    const auto idx = unravel(i);
    Box c{box.lo, box.lo};
    for (std::size_t a = 0; a < counts.size(); ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      c.lo(ai) = box.lo(ai) + idx[a] * edge(ai);
      c.hi(ai) = (idx[a] + 1 == counts[a]) ? box.hi(ai) : box.lo(ai) + (idx[a] + 1) * edge(ai);
    }
    return c;
  }
  /// Index of the cell containing x, or -1 outside the box. Upper faces belong to the last cell.
  template <class V>
  int locate(const V& x) const {
    int i = 0, stride = 1;
    for (std::size_t a = 0; a < counts.size(); ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      if (!(x(ai) >= box.lo(ai) && x(ai) <= box.hi(ai))) return -1;
      int k = static_cast<int>(std::floor((x(ai) - box.lo(ai)) / edge(ai)));
      k = std::clamp(k, 0, counts[a] - 1);
      i += k * stride;
      stride *= counts[a];
    }
    return i;
  }
  double diameter() const { return edge.norm(); }
};

/// Partition of `box` into cells with edges no longer than `max_edge`.
inline UniformPartition make_partition(const Box& box, double max_edge) {
  require(max_edge > 0.0, "grid: cell edge must be positive");
  UniformPartition p;
  p.box = box;
  p.edge = VecX(box.dim());
  for (Eigen::Index a = 0; a < box.dim(); ++a) {
    const double len = box.hi(a) - box.lo(a);
    require(len > 0.0, "grid: degenerate box");
    const int n = std::max(1, static_cast<int>(std::ceil(len / max_edge - 1e-9)));
    p.counts.push_back(n);
    p.edge(a) = len / n;
  }
  return p;
}

/// Discretized observations: cells of the expanded region per discrete symbol,
/// plus the residual symbol psi_y (index `size()`).
template <int Dim>
struct ObsGrid {
  struct Cell {
    int yq;
    Box box;
    ObsVec<Dim> rep;  // in-cell minimizer of the observation density relative to K
  };
  std::vector<UniformPartition> regions;  // per discrete symbol y^q
  std::vector<Cell> cells;
  double delta_y = 0.0;
  double epsilon = 0.0;          // requested tail mass
  double epsilon_achieved = 0.0; // sup over s in K of gamma(outside region | s)
  double lambda_bar = 0.0;       // largest Lebesgue measure of the regions

  int size() const { return static_cast<int>(cells.size()); }
  int psi() const { return size(); }
  /// Index of the cell containing (y^x, y^q), or psi().
  int locate(const ObsVec<Dim>& yx, int yq) const {
    int offset = 0;
    for (int s = 0; s < static_cast<int>(regions.size()); ++s) {
      if (s == yq) {
        const int i = regions[static_cast<std::size_t>(s)].locate(yx);
        return i < 0 ? psi() : offset + i;
      }
      offset += regions[static_cast<std::size_t>(s)].size();
    }
    return psi();
  }
};

namespace detail {

// Bounding box of C * K.
template <int Dim>
Box image_box(const ObsMap<Dim>& C, const Box& K) {
  const VecX c = K.center(), h = 0.5 * (K.hi - K.lo);
  const MatX Cm = C;
  const VecX ic = Cm * c;
  const VecX ih = Cm.cwiseAbs() * h;
  return Box{ic - ih, ic + ih};
}

inline double two_sided_tail(double y, double lo, double hi, double sd) {
  return normal_tail((y - lo) / sd) + normal_tail((hi - y) / sd);
}

}  // namespace detail

/// Builds the observation grid. Each region covers the images C(q) K_q of every
/// mode that can emit the symbol, inflated per axis so that the tail mass is
/// below epsilon (union bound over the 2l faces), unless `override_region`
/// supplies the region explicitly. The achieved tail mass is always recomputed.
template <int Dim>
ObsGrid<Dim> build_obs_grid(const PodtshsModel<Dim>& m, double delta_y, double epsilon,
                            const std::optional<Box>& override_region = std::nullopt) {
  require(delta_y > 0.0, "build_obs_grid: delta_y must be positive");
  require(epsilon > 0.0 && epsilon < 1.0, "build_obs_grid: epsilon must lie in (0,1)");
  ObsGrid<Dim> G;
  G.epsilon = epsilon;
  const int l = m.obs_dim;
  const double r_sd = normal_upper_quantile(epsilon / (2.0 * l));
  for (int s = 0; s < m.n_obs_symbols; ++s) {
    std::optional<Box> hull;
    std::vector<Box> images;
    for (int q = 0; q < m.n_modes; ++q) {
      if (m.Yq[static_cast<std::size_t>(q)][static_cast<std::size_t>(s)] <= 0.0) continue;
      const Box img = detail::image_box<Dim>(m.C[static_cast<std::size_t>(q)], m.safe[static_cast<std::size_t>(q)]);
      images.push_back(img);
      if (!hull) hull = img;
      else {
        hull->lo = hull->lo.cwiseMin(img.lo);
        hull->hi = hull->hi.cwiseMax(img.hi);
      }
    }
    if (!hull) {
      // Symbol never emitted from K: a single unit cell keeps indexing uniform.
      hull = Box{VecX::Zero(l), VecX::Ones(l)};
      images.clear();
    }
    Box region = *hull;
    if (override_region) {
      require(override_region->dim() == l, "build_obs_grid: override region has wrong dimension");
      region = *override_region;
    } else if (!images.empty()) {
      for (int a = 0; a < l; ++a) {
        const double r = std::sqrt(m.W(a, a)) * r_sd;
        region.lo(a) -= r;
        region.hi(a) += r;
      }
    }
    const auto part = make_partition(region, delta_y);
    // Tail mass: per axis, the two-sided tail is maximal at an end of the image interval.
    for (const auto& img : images) {
      double tail = 0.0;
      for (int a = 0; a < l; ++a) {
        const double sd = std::sqrt(m.W(a, a));
        tail += std::max(detail::two_sided_tail(img.lo(a), region.lo(a), region.hi(a), sd),
                         detail::two_sided_tail(img.hi(a), region.lo(a), region.hi(a), sd));
      }
      G.epsilon_achieved = std::max(G.epsilon_achieved, std::min(1.0, tail));
    }
    const VecX centre = hull->center();
    for (int i = 0; i < part.size(); ++i) {
      typename ObsGrid<Dim>::Cell c{s, part.cell(i), ObsVec<Dim>(l)};
      for (int a = 0; a < l; ++a)
        c.rep(a) = std::abs(c.box.lo(a) - centre(a)) >= std::abs(c.box.hi(a) - centre(a)) ? c.box.lo(a) : c.box.hi(a);
      G.cells.push_back(std::move(c));
    }
    G.delta_y = std::max(G.delta_y, part.diameter());
    G.lambda_bar = std::max(G.lambda_bar, region.volume());
    G.regions.push_back(part);
  }
  return G;
}

}  // namespace psafe

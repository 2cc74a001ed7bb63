#include "stftr/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"

namespace stftr {

WeightPolicy parse_weight_policy(std::string_view name) {
  if (name == "roi-zero") return WeightPolicy::roi_zero;
  if (name == "uniform") return WeightPolicy::uniform;
  throw ConfigError("unknown weight policy '" + std::string(name) + "'");
}

std::string_view weight_policy_name(WeightPolicy policy) {
  return policy == WeightPolicy::roi_zero ? "roi-zero" : "uniform";
}

GroupTree build_group_tree(const std::vector<std::vector<std::size_t>>& rois, std::size_t m, std::size_t s,
                           std::size_t p, double alpha, double beta, double gamma, WeightPolicy policy) {
  if (m == 0 || s == 0 || p == 0) throw DimensionError("group tree: empty dimensions");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("group tree: penalties must be nonnegative");
  GroupTree tree;
  tree.m = m;
  tree.s = s;
  tree.p = p;
  tree.alpha = alpha;
  tree.beta = beta;
  tree.gamma = gamma;
  constexpr std::size_t unassigned = static_cast<std::size_t>(-1);
  tree.group_of_row.assign(m, unassigned);

  for (const auto& roi : rois) {
    if (roi.empty()) throw ConfigError("group tree: empty ROI");
    SourceGroup g;
    g.roi = true;
    g.rows = roi;
    std::sort(g.rows.begin(), g.rows.end());
    const std::size_t id = tree.groups.size();
    for (std::size_t i : g.rows) {
      if (i >= m) throw ConfigError("group tree: ROI index " + std::to_string(i) + " out of range");
      if (tree.group_of_row[i] != unassigned)
        throw ConfigError("group tree: source point " + std::to_string(i) + " belongs to two ROIs");
      tree.group_of_row[i] = id;
    }
    tree.groups.push_back(std::move(g));
  }
  std::size_t singletons = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tree.group_of_row[i] != unassigned) continue;
    tree.group_of_row[i] = tree.groups.size();
    tree.groups.push_back(SourceGroup{{i}, 0.0, false});
    ++singletons;
  }

  const double n_alpha = static_cast<double>(tree.groups.size());
  for (auto& g : tree.groups) {
    if (policy == WeightPolicy::uniform) {
      g.weight = 1.0 / n_alpha;
    } else {
      g.weight = g.roi ? 0.0 : 1.0 / static_cast<double>(singletons);
    }
  }
  return tree;
}

std::vector<OrderedGroup> GroupTree::ordered_groups() const {
  std::vector<OrderedGroup> out;
  const std::size_t total = m * s * p;
  out.reserve(total + m * s + groups.size());
  for (std::size_t f = 0; f < total; ++f) out.push_back({{f}, gamma, 3});
  for (std::size_t b = 0; b < m * s; ++b) {
    OrderedGroup g{{}, beta, 2};
    for (std::size_t k = 0; k < p; ++k) g.members.push_back(b * p + k);
    out.push_back(std::move(g));
  }
  for (std::size_t l = 0; l < groups.size(); ++l) {
    OrderedGroup g{{}, level1_lambda(l), 1};
    for (std::size_t i : groups[l].rows)
      for (std::size_t e = 0; e < s * p; ++e) g.members.push_back(i * s * p + e);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::size_t> GroupTree::rows_of(std::span<const std::size_t> group_ids) const {
  std::vector<std::size_t> rows;
  for (std::size_t l : group_ids) rows.insert(rows.end(), groups[l].rows.begin(), groups[l].rows.end());
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

std::vector<std::size_t> GroupTree::roi_group_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t l = 0; l < groups.size(); ++l)
    if (groups[l].roi) ids.push_back(l);
  return ids;
}

GroupTree GroupTree::with_penalties(double a, double b, double c) const {
  GroupTree t = *this;
  t.alpha = a;
  t.beta = b;
  t.gamma = c;
  return t;
}

namespace {

void check_shape(const CoefTensor& z, const GroupTree& tree) {
  if (z.m() != tree.m || z.s() != tree.s || z.p() != tree.p)
    throw DimensionError("penalty: tensor shape does not match the group tree");
}

// Group soft-threshold on a contiguous run of doubles. Returns false when the
// group was zeroed (including the tie norm == threshold).
inline bool shrink(double* x, std::size_t n, double threshold) {
  double sq = 0.0;
  for (std::size_t u = 0; u < n; ++u) sq += x[u] * x[u];
  const double nrm = std::sqrt(sq);
  if (nrm <= threshold) {
    std::fill(x, x + n, 0.0);
    return false;
  }
  if (threshold > 0.0) {
    const double f = 1.0 - threshold / nrm;
    for (std::size_t u = 0; u < n; ++u) x[u] *= f;
  }
  return true;
}

}  // namespace

double penalty_value(const CoefTensor& z, const GroupTree& tree) {
  check_shape(z, tree);
  double level1 = 0.0, level2 = 0.0, level3 = 0.0;
  for (std::size_t l = 0; l < tree.groups.size(); ++l) {
    double sq = 0.0;
    for (std::size_t i : tree.groups[l].rows) sq += kernels::sum_sq(z.row_reals(i));
    level1 += tree.groups[l].weight * std::sqrt(sq);
  }
  for (std::size_t i = 0; i < z.m(); ++i)
    for (std::size_t j = 0; j < z.s(); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < z.p(); ++k) {
        sq += std::norm(z(i, j, k));
        level3 += std::abs(z(i, j, k));
      }
      level2 += std::sqrt(sq);
    }
  return tree.alpha * level1 + tree.beta * level2 + tree.gamma * level3;
}

void prox_inplace(CoefTensor& z, const GroupTree& tree, double step, std::span<const std::size_t> group_ids) {
  check_shape(z, tree);
  if (!(step > 0.0)) throw ConfigError("prox: step must be positive");
  const double t3 = step * tree.gamma;
  const double t2 = step * tree.beta;
  const std::size_t p = z.p();
  for (std::size_t l : group_ids) {
    const SourceGroup& g = tree.groups[l];
    bool any = false;
    for (std::size_t i : g.rows) {
      if (z.row_is_zero(i)) continue;
      for (std::size_t j = 0; j < z.s(); ++j) {
        cplx* block = &z(i, j, 0);
        bool alive = false;
        for (std::size_t k = 0; k < p; ++k) alive |= shrink(reinterpret_cast<double*>(block + k), 2, t3);
        if (alive) any |= shrink(reinterpret_cast<double*>(block), 2 * p, t2);
      }
    }
    if (!any) continue;
    const double t1 = step * tree.level1_lambda(l);
    double sq = 0.0;
    for (std::size_t i : g.rows) sq += kernels::sum_sq(z.row_reals(i));
    const double nrm = std::sqrt(sq);
    if (nrm <= t1) {
      for (std::size_t i : g.rows) std::fill(z.row(i).begin(), z.row(i).end(), cplx{});
    } else if (t1 > 0.0) {
      for (std::size_t i : g.rows) kernels::scale(1.0 - t1 / nrm, z.row_reals(i));
    }
  }
}

CoefTensor prox(const CoefTensor& y, const GroupTree& tree, double step) {
  CoefTensor z = y;
  std::vector<std::size_t> all(tree.groups.size());
  for (std::size_t l = 0; l < all.size(); ++l) all[l] = l;
  prox_inplace(z, tree, step, all);
  return z;
}

CoefTensor prox_ordered(const CoefTensor& y, const std::vector<OrderedGroup>& groups, double step) {
  if (!(step > 0.0)) throw ConfigError("prox: step must be positive");
  CoefTensor z = y;
  for (const auto& g : groups) {
    double sq = 0.0;
    for (std::size_t f : g.members) sq += std::norm(z[f]);
    const double nrm = std::sqrt(sq);
    const double thr = step * g.lambda;
    if (nrm <= thr) {
      for (std::size_t f : g.members) z[f] = cplx{};
    } else {
      const double factor = 1.0 - thr / nrm;
      for (std::size_t f : g.members) z[f] *= factor;
    }
  }
  return z;
}

}  // namespace stftr

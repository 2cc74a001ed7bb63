#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "stftr/tensor.hpp"

namespace stftr {

enum class WeightPolicy {
  // ROI groups get weight 0; non-ROI singletons share equal weights summing to 1.
  roi_zero,
  // Every first-level group gets 1 / N_alpha.
  uniform,
};

WeightPolicy parse_weight_policy(std::string_view name);
std::string_view weight_policy_name(WeightPolicy policy);

// One first-level group A_l: a whole ROI or a single source point outside
// every ROI.
struct SourceGroup {
  std::vector<std::size_t> rows;
  double weight = 0.0;
  bool roi = false;
};

// Flattened group for the generic ordered sweep: member flat indices into
// the coefficient tensor and the group penalty lambda_h.
struct OrderedGroup {
  std::vector<std::size_t> members;
  double lambda = 0.0;
  int level = 0;  // 3 = single entry, 2 = (i, j) covariate block, 1 = A_l
};

// Three-level laminar penalty
//   alpha sum_l w_l ||Z|A_l|| + beta sum_{i,j} ||Z_{ij.}|| + gamma sum_{ijk} |Z_ijk|.
// ROI groups come first in the order they were given, then the remaining
// source points as singletons in index order.
struct GroupTree {
  std::size_t m = 0, s = 0, p = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  std::vector<SourceGroup> groups;
  std::vector<std::size_t> group_of_row;

  std::size_t n_groups() const noexcept { return groups.size(); }
  double level1_lambda(std::size_t l) const noexcept { return alpha * groups[l].weight; }

  // Level-3 entries, then level-2 blocks, then level-1 groups. Laminar:
  // an earlier group is a subset of, or disjoint from, every later one.
  std::vector<OrderedGroup> ordered_groups() const;

  // Rows covered by the listed first-level groups, ascending.
  std::vector<std::size_t> rows_of(std::span<const std::size_t> group_ids) const;
  std::vector<std::size_t> roi_group_ids() const;

  GroupTree with_penalties(double a, double b, double c) const;
};

GroupTree build_group_tree(const std::vector<std::vector<std::size_t>>& rois, std::size_t m, std::size_t s,
                           std::size_t p, double alpha, double beta, double gamma,
                           WeightPolicy policy = WeightPolicy::roi_zero);

double penalty_value(const CoefTensor& z, const GroupTree& tree);

// argmin_x 1/2 ||x - y||^2 + step * Omega(x), by the ordered composition of
// group soft-thresholds. Complex entries count as real pairs in every norm.
CoefTensor prox(const CoefTensor& y, const GroupTree& tree, double step);

// In-place prox over the listed first-level groups only; entries of other
// groups are left untouched. Groups whose entries are all zero are skipped.
void prox_inplace(CoefTensor& z, const GroupTree& tree, double step, std::span<const std::size_t> group_ids);

// Reference sweep over an explicit ordered group list.
CoefTensor prox_ordered(const CoefTensor& y, const std::vector<OrderedGroup>& groups, double step);

}  // namespace stftr

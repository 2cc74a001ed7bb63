#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stftr/tensor.hpp"

namespace stftr {

// Multi-trial recordings: q sensor matrices M^(r) (n x T), the forward matrix
// G (n x m) and the design matrix X (q x p) whose first column is the
// intercept and whose remaining columns are centred across trials.
struct TrialDataset {
  std::vector<RowMatrix> M;
  RowMatrix G;
  RowMatrix X;
  double sampling_rate = 100.0;
  bool whitened = false;

  std::size_t n() const noexcept { return static_cast<std::size_t>(G.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(G.cols()); }
  std::size_t q() const noexcept { return M.size(); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(X.cols()); }
  std::size_t T() const noexcept { return M.empty() ? 0 : static_cast<std::size_t>(M.front().cols()); }

  // Shape checks plus, when require_centered, the intercept/centring
  // invariant on X. Throws DimensionError or ConfigError.
  void validate(bool require_centered = true) const;

  // Trials in the given order. Design columns are copied unchanged.
  TrialDataset subset(std::span<const std::size_t> trials) const;

  double data_squared_norm() const;
};

// Subtract the column mean from every non-intercept column of X.
void center_covariates(RowMatrix& X);

// Design matrix [1, c - mean(c)] for a single covariate c.
RowMatrix design_from_covariate(std::span<const double> covariate);

}  // namespace stftr

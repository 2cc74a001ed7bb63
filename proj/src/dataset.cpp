#include "stftr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stftr/errors.hpp"

namespace stftr {

void TrialDataset::validate(bool require_centered) const {
  if (M.size() < 2) throw ConfigError("dataset: at least two trials required");
  if (X.cols() < 1) throw ConfigError("dataset: design matrix needs an intercept column");
  if (static_cast<std::size_t>(X.rows()) != M.size())
    throw DimensionError("dataset: design matrix has " + std::to_string(X.rows()) + " rows for " +
                         std::to_string(M.size()) + " trials");
  const auto rows = M.front().rows();
  const auto cols = M.front().cols();
  if (rows != G.rows()) throw DimensionError("dataset: sensor count differs between M and G");
  for (std::size_t r = 0; r < M.size(); ++r) {
    if (M[r].rows() != rows || M[r].cols() != cols)
      throw DimensionError("dataset: trial " + std::to_string(r) + " has a different shape");
  }
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    if (X(r, 0) != 1.0) throw ConfigError("dataset: first design column must be all ones");
  if (!require_centered) return;
  for (Eigen::Index k = 1; k < X.cols(); ++k) {
    const double scale = std::max(1.0, X.col(k).cwiseAbs().maxCoeff());
    if (std::abs(X.col(k).mean()) > 1e-12 * scale)
      throw ConfigError("dataset: design column " + std::to_string(k) + " is not centred");
  }
}

TrialDataset TrialDataset::subset(std::span<const std::size_t> trials) const {
  TrialDataset out;
  out.G = G;
  out.sampling_rate = sampling_rate;
  out.whitened = whitened;
  out.X.resize(static_cast<Eigen::Index>(trials.size()), X.cols());
  out.M.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i] >= M.size()) throw DimensionError("subset: trial index out of range");
    out.M.push_back(M[trials[i]]);
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(trials[i]));
  }
  return out;
}

double TrialDataset::data_squared_norm() const {
  double acc = 0.0;
  for (const auto& m : M) acc += m.squaredNorm();
  return acc;
}

void center_covariates(RowMatrix& X) {
  for (Eigen::Index k = 1; k < X.cols(); ++k) X.col(k).array() -= X.col(k).mean();
}

RowMatrix design_from_covariate(std::span<const double> covariate) {
  RowMatrix X(static_cast<Eigen::Index>(covariate.size()), 2);
  for (std::size_t r = 0; r < covariate.size(); ++r) {
    X(static_cast<Eigen::Index>(r), 0) = 1.0;
    X(static_cast<Eigen::Index>(r), 1) = covariate[r];
  }
  center_covariates(X);
  return X;
}

}  // namespace stftr

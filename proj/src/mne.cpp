#include "stftr/mne.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/parallel.hpp"

namespace stftr {

MneOperator::MneOperator(const RowMatrix& G, double lambda) : G_(G), lambda_(lambda) {
  if (!(lambda > 0.0)) throw ConfigError("mne: lambda must be positive");
  Eigen::MatrixXd K = G * G.transpose();
  K.diagonal().array() += lambda;
  llt_.compute(K);
  if (llt_.info() != Eigen::Success) throw NumericalError("mne: G G^T + lambda I is not positive definite");
}

RowMatrix MneOperator::solve(const RowMatrix& M) const {
  if (M.rows() != G_.rows()) throw DimensionError("mne: sensor count mismatch");
  const Eigen::MatrixXd W = llt_.solve(Eigen::MatrixXd(M));
  return G_.transpose() * W;
}

RowMatrix mne_solve_trial(const RowMatrix& M, const RowMatrix& G, double lambda) {
  return MneOperator(G, lambda).solve(M);
}

double mne_lambda_scale(const RowMatrix& G) {
  return G.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(G.rows(), 1));
}

namespace {

// (X^T X)^{-1} X^T, p x q.
Eigen::MatrixXd ols_operator(const RowMatrix& X) {
  const Eigen::MatrixXd Xd = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xd);
  if (qr.rank() < Xd.cols()) throw NumericalError("mne: X^T X is singular");
  return (Xd.transpose() * Xd).ldlt().solve(Xd.transpose());
}

CoefTensor apply_ols(const Eigen::MatrixXd& H, const std::vector<CoefTensor>& coefs, std::size_t m, std::size_t s) {
  const std::size_t p = static_cast<std::size_t>(H.rows());
  CoefTensor z(m, s, p);
  for (std::size_t f = 0; f < m * s; ++f)
    for (std::size_t k = 0; k < p; ++k) {
      cplx acc{};
      for (std::size_t r = 0; r < coefs.size(); ++r)
        acc += H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) * coefs[r][f];
      z[f * p + k] = acc;
    }
  return z;
}

CoefTensor fitted_trial(const CoefTensor& z, const RowMatrix& X, std::size_t r) {
  const std::size_t p = z.p();
  CoefTensor out(z.m(), z.s(), 1);
  for (std::size_t f = 0; f < z.m() * z.s(); ++f) {
    cplx acc{};
    for (std::size_t k = 0; k < p; ++k) acc += X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * z[f * p + k];
    out[f] = acc;
  }
  return out;
}

}  // namespace

MneRegression mne_regress(const std::vector<RowMatrix>& sources, const StftDictionary& dict, const RowMatrix& X) {
  if (sources.size() != static_cast<std::size_t>(X.rows()))
    throw DimensionError("mne_regress: trial count differs from design rows");
  if (sources.empty()) throw DimensionError("mne_regress: no trials");
  const std::size_t m = static_cast<std::size_t>(sources.front().rows());
  const std::size_t T = dict.samples();
  const Eigen::MatrixXd H = ols_operator(X);
  MneRegression out;
  out.trial_coefs.reserve(sources.size());
  for (const auto& S : sources) {
    if (static_cast<std::size_t>(S.rows()) != m || static_cast<std::size_t>(S.cols()) != T)
      throw DimensionError("mne_regress: source trial shape mismatch");
    CoefTensor c(m, dict.size(), 1);
    for (std::size_t i = 0; i < m; ++i) dict.analyze(S.data() + i * T, &c(i, 0, 0), 1);
    out.trial_coefs.push_back(std::move(c));
  }
  out.z = apply_ols(H, out.trial_coefs, m, dict.size());
  out.residuals.reserve(sources.size());
  for (std::size_t r = 0; r < sources.size(); ++r) {
    CoefTensor e = out.trial_coefs[r];
    const CoefTensor fit = fitted_trial(out.z, X, r);
    for (std::size_t f = 0; f < e.size(); ++f) e[f] -= fit[f];
    out.residuals.push_back(std::move(e));
  }
  return out;
}

MneRegression mne_fit(const TrialDataset& data, const StftDictionary& dict, double lambda) {
  const MneOperator op(data.G, lambda);
  std::vector<RowMatrix> sources;
  sources.reserve(data.q());
  for (const auto& M : data.M) sources.push_back(op.solve(M));
  return mne_regress(sources, dict, data.X);
}

double select_mne_lambda(const TrialDataset& data, const StftDictionary& dict, std::span<const double> grid,
                         std::span<const std::size_t> fold_of_trial, std::size_t threads) {
  if (grid.empty()) throw ConfigError("mne: lambda grid is empty");
  if (fold_of_trial.size() != data.q()) throw ConfigError("mne: fold assignment does not cover every trial");
  if (grid.size() == 1) return grid.front();
  const std::size_t n_folds = *std::max_element(fold_of_trial.begin(), fold_of_trial.end()) + 1;
  std::vector<TrialDataset> train(n_folds), test(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < data.q(); ++r) (fold_of_trial[r] == f ? te : tr).push_back(r);
    train[f] = data.subset(tr);
    test[f] = data.subset(te);
  }
  std::vector<double> errors(grid.size() * n_folds, 0.0);
  parallel_for(errors.size(), threads, [&](std::size_t task) {
    const std::size_t g = task / n_folds, f = task % n_folds;
    if (test[f].q() == 0 || train[f].q() < 2) return;
    try {
      const auto fit = mne_fit(train[f], dict, grid[g]);
      errors[task] = prediction_error(fit.z, test[f], dict);
    } catch (const NumericalError&) {
      errors[task] = std::numeric_limits<double>::infinity();
    }
  });
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (std::size_t f = 0; f < n_folds; ++f) total += errors[g * n_folds + f];
    if (total < best_err) {
      best_err = total;
      best = g;
    }
  }
  return grid[best];
}

InferenceResult mne_bootstrap(const MneRegression& fit, const StftDictionary& dict, const RowMatrix& X,
                              std::size_t B, std::uint64_t seed, std::size_t threads) {
  if (B < 2) throw ConfigError("bootstrap: B must be at least 2");
  const std::size_t q = fit.trial_coefs.size();
  if (static_cast<std::size_t>(X.rows()) != q) throw DimensionError("mne_bootstrap: design rows differ from trials");
  const Eigen::MatrixXd H = ols_operator(X);
  const auto h = leverage(X);
  const std::size_t m = fit.z.m(), s = fit.z.s();
  std::vector<CoefTensor> fitted, scaled;
  for (std::size_t r = 0; r < q; ++r) {
    if (!(h[r] < 1.0)) throw NumericalError("mne_bootstrap: trial " + std::to_string(r) + " has leverage 1");
    fitted.push_back(fitted_trial(fit.z, X, r));
    CoefTensor e = fit.residuals[r];
    const double c = 1.0 / std::sqrt(1.0 - h[r]);
    for (auto& v : e.values()) v *= c;
    scaled.push_back(std::move(e));
  }
  std::vector<CoefTensor> replicates(B);
  parallel_for(B, threads, [&](std::size_t b) {
    const auto draw = draw_trials(seed, b, q);
    std::vector<CoefTensor> boot;
    boot.reserve(q);
    for (std::size_t r = 0; r < q; ++r) {
      CoefTensor c = fitted[r];
      for (std::size_t f = 0; f < c.size(); ++f) c[f] += scaled[draw[r]][f];
      boot.push_back(std::move(c));
    }
    replicates[b] = apply_ols(H, boot, m, s);
  });

  InferenceResult result;
  result.method = "mne-r";
  result.estimate = fit.z;
  result.support = fit.z.support();
  result.B = B;
  result.seed = seed;
  const std::size_t p = fit.z.p();
  summarize_replicates(result, replicates,
                       [&](std::size_t f, int part) { return part == 0 || !dict.real_row((f / p) % s); });
  return result;
}

}  // namespace stftr

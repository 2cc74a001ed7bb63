#pragma once

#include <Eigen/Cholesky>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stftr/bootstrap.hpp"
#include "stftr/dataset.hpp"
#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

// Tikhonov minimum-norm inverse S = G^T (G G^T + lambda I)^{-1} M with the
// n x n factorization computed once and shared across trials.
class MneOperator {
 public:
  MneOperator(const RowMatrix& G, double lambda);
  RowMatrix solve(const RowMatrix& M) const;
  double lambda() const noexcept { return lambda_; }

 private:
  RowMatrix G_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double lambda_;
};

RowMatrix mne_solve_trial(const RowMatrix& M, const RowMatrix& G, double lambda);

// Typical scale for the MNE grid: trace(G G^T) / n.
double mne_lambda_scale(const RowMatrix& G);

struct MneRegression {
  CoefTensor z;                       // m x s x p OLS coefficients
  std::vector<CoefTensor> trial_coefs;  // per trial, m x s x 1 STFT coefficients of the source estimate
  std::vector<CoefTensor> residuals;    // per trial, trial_coefs - sum_k X(r,k) Z_k
};

// Per-trial STFT analysis of every source series, then per (i, j) OLS of the
// q complex coefficients on X.
MneRegression mne_regress(const std::vector<RowMatrix>& sources, const StftDictionary& dict, const RowMatrix& X);

// mne_solve_trial on every trial followed by mne_regress.
MneRegression mne_fit(const TrialDataset& data, const StftDictionary& dict, double lambda);

// Lambda (absolute) minimizing the held-out sensor-space error of the MNE-R
// fit over the folds: the fit on training trials predicts held-out trials
// through G and their design rows.
double select_mne_lambda(const TrialDataset& data, const StftDictionary& dict, std::span<const double> grid,
                         std::span<const std::size_t> fold_of_trial, std::size_t threads = 1);

// Leverage-rescaled residual bootstrap of the per-component regressions.
InferenceResult mne_bootstrap(const MneRegression& fit, const StftDictionary& dict, const RowMatrix& X,
                              std::size_t B, std::uint64_t seed, std::size_t threads = 1);

}  // namespace stftr

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stftr/dataset.hpp"
#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

// Prediction for trial r: G (sum_k X(r, k) Z_k) Phi^H, real part.
RowMatrix predict_trial(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict,
                        std::size_t r);

// Per-source synthesized series sum_k X(r, k) Z_{i,.,k} Phi^H for every source
// point (m x T). Rows whose coefficients are all zero stay exactly zero.
RowMatrix source_series(const CoefTensor& z, std::span<const double> covariates,
                        const StftDictionary& dict);

// 1/2 sum_r ||M^(r) - predict_trial(z, r)||_F^2, evaluated trial by trial.
double objective(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict);

// Gradient with respect to (Re Z, Im Z), packed as Re + i Im.
CoefTensor gradient(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict);

struct LipschitzEstimate {
  double value = 0.0;     // safety-inflated estimate used as the FISTA step bound
  double raw = 0.0;       // power-iteration eigenvalue estimate
  std::size_t iterations = 0;
  bool converged = false;
};

inline constexpr double kLipschitzSafety = 1.05;

// The data-fit term f(Z) = 1/2 ||b - A z||^2 with its normal operator A^T A
// applied through cached reductions: G^T G (m x m), X^T X (p x p) and
// A^T b = analyze(G^T sum_r X(r, k) M^(r)) per covariate. Per-call cost is
// independent of the trial count.
//
// Row-restricted forms take `in_rows` (source rows where z may be nonzero)
// and `out_rows` (rows of the result that are computed; others untouched).
class ForwardModel {
 public:
  ForwardModel(const TrialDataset& data, const StftDictionary& dict);

  std::size_t m() const noexcept { return m_; }
  std::size_t s() const noexcept { return dict_->size(); }
  std::size_t p() const noexcept { return p_; }
  const StftDictionary& dictionary() const noexcept { return *dict_; }
  const TrialDataset& data() const noexcept { return *data_; }
  const RowMatrix& gram_sources() const noexcept { return gtg_; }
  const RowMatrix& gram_design() const noexcept { return xtx_; }
  // A^T b.
  const CoefTensor& correlation() const noexcept { return atb_; }
  CoefTensor zeros() const { return CoefTensor(m_, s(), p_); }

  // out|rows = (A^T A z)|rows.
  void normal_apply(const CoefTensor& z, std::span<const std::size_t> in_rows,
                    std::span<const std::size_t> out_rows, CoefTensor& out) const;
  // out|rows = (A^T A z - A^T b)|rows.
  void gradient(const CoefTensor& z, std::span<const std::size_t> in_rows,
                std::span<const std::size_t> out_rows, CoefTensor& out) const;
  CoefTensor gradient(const CoefTensor& z) const;

  // Direct trial-by-trial evaluation of f for z supported on `rows`.
  double objective(const CoefTensor& z, std::span<const std::size_t> rows) const;
  double objective(const CoefTensor& z) const;

  // Power iteration for the largest eigenvalue of A^T A restricted to rows,
  // started from a seeded random complex tensor. value = raw * 1.05.
  LipschitzEstimate lipschitz(std::span<const std::size_t> rows, double tol = 1e-6,
                              std::size_t max_iter = 500, std::uint64_t seed = 0x5f3759df) const;

  const std::vector<std::size_t>& all_rows() const noexcept { return all_rows_; }

 private:
  const TrialDataset* data_;
  const StftDictionary* dict_;
  std::size_t m_, p_;
  RowMatrix gtg_, xtx_;
  CoefTensor atb_;
  std::vector<std::size_t> all_rows_;
};

// Free-function form of the power iteration on the full operator.
LipschitzEstimate lipschitz_constant(const TrialDataset& data, const StftDictionary& dict, double tol = 1e-6,
                                     std::size_t max_iter = 500);

}  // namespace stftr

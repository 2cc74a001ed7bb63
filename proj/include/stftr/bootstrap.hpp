#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stftr/dataset.hpp"
#include "stftr/refit_cv.hpp"
#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

struct DataSplit {
  TrialDataset first;   // trials 1, 3, 5, ... (1-based odd)
  TrialDataset second;  // trials 2, 4, 6, ...
  std::vector<std::size_t> first_trials, second_trials;  // 0-based indices
};

// Parity split; non-intercept design columns are re-centred within each half.
DataSplit split_halves(const TrialDataset& data);

// Hat-matrix diagonal h_r = X_r^T (X^T X)^{-1} X_r.
std::vector<double> leverage(const RowMatrix& X);

// Bootstrap summary. Complex tensors pack the real-part quantity in .real()
// and the imaginary-part quantity in .imag().
struct InferenceResult {
  std::string method = "stft-r";
  CoefTensor estimate;
  CoefTensor se;      // replicate standard deviations, per part
  CoefTensor t_stat;  // estimate / se per part; 0 where se = 0
  std::vector<std::size_t> support;
  std::vector<std::size_t> degenerate;  // support entries with an estimable part whose se is 0
  std::vector<double> replicate_lambda2;
  std::size_t B = 0;
  std::uint64_t seed = 0;

  bool degenerate_se() const noexcept { return !degenerate.empty(); }
};

struct BootstrapConfig {
  std::size_t B = 20;
  std::uint64_t seed = 0;
  // Absolute ridge values tried by the per-replicate 2-fold CV.
  std::vector<double> lambda2_grid;
  std::size_t threads = 1;
};

// Trial indices drawn with replacement for replicate b.
std::vector<std::size_t> draw_trials(std::uint64_t seed, std::size_t replicate, std::size_t q);

// Residuals M^(r) - prediction, scaled by (1 - h_r)^{-1/2}.
std::vector<RowMatrix> rescaled_residuals(const TrialDataset& data, const StftDictionary& dict,
                                          const CoefTensor& z);

// M^(r)* = prediction_r + residuals[draw[r]].
TrialDataset bootstrap_dataset(const TrialDataset& data, const std::vector<RowMatrix>& predictions,
                               const std::vector<RowMatrix>& residuals, std::span<const std::size_t> draw);

// Residual bootstrap of the support-constrained L2 refit.
InferenceResult residual_bootstrap(const TrialDataset& data, const StftDictionary& dict,
                                   std::span<const std::size_t> support, const CoefTensor& z_l2,
                                   const BootstrapConfig& config, const RefitConfig& refit = {});

// Fills se, t_stat and degenerate from replicate estimates (reduced in
// replicate order). `estimable(f, part)` says whether part 0 (re) / 1 (im) of
// entry f carries information.
template <typename Estimable>
void summarize_replicates(InferenceResult& result, const std::vector<CoefTensor>& replicates,
                          Estimable estimable);

// Mean |T| per STFT cell over the ROI's source points with a nonzero estimate
// at that cell, as an n_freqs x n_windows matrix. Real-atom rows average
// only the real part.
RowMatrix averaged_absolute_t(const InferenceResult& result, const StftDictionary& dict,
                              std::span<const std::size_t> roi, std::size_t covariate);

// Fraction of the matrix total held by its first `rows` rows (0 for an
// all-zero matrix).
double low_frequency_fraction(const RowMatrix& avg_abs_t, std::size_t rows = 2);

}  // namespace stftr

#include "stftr/bootstrap_impl.hpp"

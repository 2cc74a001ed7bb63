#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stftr/dataset.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/penalty.hpp"
#include "stftr/solver.hpp"
#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

struct RefitConfig {
  // Ridge parameters for the refit, ascending. CvPlan grids interpret these
  // as multiples of a data-derived scale.
  std::vector<double> lambda2_grid{1e-4, 1e-3, 1e-2, 1e-1};
  double cg_tol = 1e-10;  // relative residual ||r|| / ||A^T b||
  std::size_t cg_max_iter = 2000;

  void validate() const;
};

struct RefitResult {
  CoefTensor z;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;  // false: CG stagnated or hit cg_max_iter
};

// Flat indices of the nonzero entries of z (ascending).
std::vector<std::size_t> support_of(const CoefTensor& z);

// argmin f(Z) + lambda2/2 ||Z||^2 over tensors supported on `support`, by
// diagonally preconditioned conjugate gradients on the restricted normal
// equations. Imaginary parts of real-atom rows are not estimable and stay 0.
// Entries off the support are exactly zero.
RefitResult l2_refit(const ForwardModel& model, std::span<const std::size_t> support, double lambda2,
                     const RefitConfig& config = {});

// f(Z) + lambda2/2 ||Z||^2.
double ridge_objective(const ForwardModel& model, const CoefTensor& z, double lambda2);

// Reference scale for ridge grids: the largest eigenvalue of A^T A (raw
// power-iteration estimate).
double ridge_scale(const ForwardModel& model);

struct PenaltyScales {
  double alpha = 0.0;  // max over weighted groups of ||grad f(0)|A_l|| / w_l
  double beta = 0.0;   // max over (i, j) of ||grad f(0)_{ij.}||
};
// Smallest penalties (each alone) for which Z = 0 is optimal.
PenaltyScales penalty_scales(const ForwardModel& model, const GroupTree& tree);

enum class GammaPolicy { fixed_small, tuned };
GammaPolicy parse_gamma_policy(std::string_view name);

struct CvPlan {
  std::size_t n_folds = 5;
  std::vector<std::size_t> fold_of_trial;
  // Multiples of penalty_scales (alpha, beta, gamma = beta scale) and of
  // ridge_scale (lambda2), all computed on the full data.
  std::vector<double> alpha_grid{0.1, 0.3};
  std::vector<double> beta_grid{0.05, 0.2};
  std::vector<double> gamma_grid{1e-3};
  std::vector<double> lambda2_grid{1e-4, 1e-2};
  GammaPolicy gamma_policy = GammaPolicy::fixed_small;
  double gamma_fixed = 1e-3;  // multiple of the beta scale under fixed_small

  // Fold r mod n_folds.
  static CvPlan interleaved(std::size_t q, std::size_t n_folds);
  void validate(std::size_t q) const;
};

struct CvRow {
  double alpha = 0.0, beta = 0.0, gamma = 0.0, lambda2 = 0.0;
  std::size_t fold = 0;
  double error = 0.0;
};

struct CvResult {
  double alpha = 0.0, beta = 0.0, gamma = 0.0, lambda2 = 0.0;
  double best_error = 0.0;
  std::vector<CvRow> table;
  std::vector<std::string> warnings;
};

// Held-out error sum_r ||M^(r) - prediction||_F^2.
double prediction_error(const CoefTensor& z, const TrialDataset& held_out, const StftDictionary& dict);

// Grid search: per fold and (alpha, beta, gamma), an active-set L21 fit on
// the training trials, then per lambda2 a support-constrained refit, scored
// on the held-out trials. Penalties in the result and table are absolute.
CvResult cross_validate(const TrialDataset& data, const StftDictionary& dict, const GroupTree& tree_template,
                        const CvPlan& plan, const SolverConfig& solver, const RefitConfig& refit,
                        std::size_t threads = 1);

// Picks lambda2 from `grid` (absolute values) by held-out error over the
// given folds, refitting on the support each time.
double select_lambda2(const TrialDataset& data, const StftDictionary& dict, std::span<const std::size_t> support,
                      std::span<const double> grid, std::span<const std::size_t> fold_of_trial,
                      const RefitConfig& refit);

void write_cv_table(std::ostream& os, const std::vector<CvRow>& table);

}  // namespace stftr

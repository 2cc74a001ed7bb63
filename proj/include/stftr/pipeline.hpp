#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stftr/bootstrap.hpp"
#include "stftr/dataset.hpp"
#include "stftr/mne.hpp"
#include "stftr/penalty.hpp"
#include "stftr/refit_cv.hpp"
#include "stftr/simulator.hpp"
#include "stftr/solver.hpp"
#include "stftr/stft.hpp"

namespace stftr {

struct NamedRoi {
  std::string name;
  std::vector<std::size_t> sources;
};

enum class Method { stft_r, mne_r };
Method parse_method(std::string_view name);
std::string_view method_name(Method method);

// Every tunable of a fit / bootstrap run. Penalties and ridge values left
// unset are chosen by cross-validation; grids are relative to data scales.
struct RunConfig {
  struct Model {
    double window_ms = 160.0;
    double step_ms = 40.0;
    WindowKind window = WindowKind::sine;
  } model;
  struct Penalty {
    std::optional<double> alpha, beta, gamma;  // absolute values
    WeightPolicy weight_policy = WeightPolicy::roi_zero;
    std::string roi_file;
  } penalty;
  SolverConfig solver;
  InitialActive initial_active = InitialActive::roi;
  struct Cv {
    std::size_t n_folds = 5;
    std::vector<double> alpha_grid{0.05, 0.1, 0.2, 0.4};
    std::vector<double> beta_grid{0.05, 0.1, 0.2, 0.4};
    std::vector<double> gamma_grid{1e-3, 1e-2};
    std::vector<double> lambda2_grid{1e-4, 1e-3, 1e-2, 1e-1};
    GammaPolicy gamma_policy = GammaPolicy::fixed_small;
    double gamma_fixed = 1e-3;
  } cv;
  RefitConfig refit;
  struct Bootstrap {
    std::size_t B = 20;
    std::uint64_t seed = 0;
  } bootstrap;
  struct Mne {
    std::vector<double> lambda_grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};  // multiples of trace(G G^T) / n
    std::size_t n_folds = 5;
  } mne;
  Method method = Method::stft_r;
  bool split_halves = true;

  void validate() const;
  // Window and step in samples at the given sampling rate.
  StftDictionary dictionary(std::size_t samples, double sampling_rate) const;
};

struct StftrFit {
  DataSplit split;           // first half selects, second half estimates
  CoefTensor z_sparse;       // L21 estimate on the first half
  CoefTensor z;              // L2 refit on the second half
  std::vector<std::size_t> support;
  ActiveSetResult solve;
  std::optional<CvResult> cv;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, lambda2 = 0.0;
  std::vector<std::string> warnings;
};

struct MnerFit {
  DataSplit split;
  MneRegression regression;
  double lambda = 0.0;
};

// Halves of the data, or the full data twice when splitting is disabled.
DataSplit make_split(const TrialDataset& data, bool split);

StftrFit fit_stftr(const TrialDataset& data, const StftDictionary& dict, const std::vector<NamedRoi>& rois,
                   const RunConfig& config, std::size_t threads);
MnerFit fit_mner(const TrialDataset& data, const StftDictionary& dict, const RunConfig& config, std::size_t threads);

InferenceResult bootstrap_stftr(const StftrFit& fit, const StftDictionary& dict, const RunConfig& config,
                                std::size_t threads);
InferenceResult bootstrap_mner(const MnerFit& fit, const StftDictionary& dict, const RunConfig& config,
                               std::size_t threads);

// One simulated replicate of the comparison study.
struct StudyRun {
  std::uint64_t seed = 0;
  double mse_stftr_roi = 0.0, mse_mner_roi = 0.0;
  double mse_stftr_all = 0.0, mse_mner_all = 0.0;
  double ratio_roi = 0.0, ratio_all = 0.0;
  // Summed over target ROIs, n_freqs x n_windows.
  RowMatrix avg_abs_t_stftr, avg_abs_t_mner;
  double low_freq_stftr = 0.0, low_freq_mner = 0.0;
  std::size_t support_rows = 0;
  bool stftr_converged = false;
  bool degenerate_se = false;
};

StudyRun run_study(const SimulationSpec& spec, const RunConfig& config, std::size_t threads);

std::vector<NamedRoi> simulation_rois(const SimulationSpec& spec);

}  // namespace stftr

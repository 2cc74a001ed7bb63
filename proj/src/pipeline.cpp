#include "stftr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/metrics.hpp"

namespace stftr {

Method parse_method(std::string_view name) {
  if (name == "stft-r") return Method::stft_r;
  if (name == "mne-r") return Method::mne_r;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected stft-r or mne-r)");
}

std::string_view method_name(Method method) { return method == Method::stft_r ? "stft-r" : "mne-r"; }

void RunConfig::validate() const {
  if (!(model.window_ms > 0.0) || !(model.step_ms > 0.0)) throw ConfigError("model: window and step must be positive");
  const int given = penalty.alpha.has_value() + penalty.beta.has_value() + penalty.gamma.has_value();
  if (given != 0 && given != 3) throw ConfigError("penalty: give all of alpha, beta, gamma or none of them");
  if (given == 3 && (!(*penalty.alpha >= 0.0) || !(*penalty.beta >= 0.0) || !(*penalty.gamma >= 0.0)))
    throw ConfigError("penalty: alpha, beta and gamma must be nonnegative");
  solver.validate();
  refit.validate();
  if (cv.n_folds < 2) throw ConfigError("cv: at least two folds required");
  if (cv.lambda2_grid.empty()) throw ConfigError("cv: empty lambda2 grid");
  if (bootstrap.B < 2) throw ConfigError("bootstrap: B must be at least 2");
  if (mne.lambda_grid.empty()) throw ConfigError("mne: empty lambda grid");
  for (double v : mne.lambda_grid)
    if (!(v > 0.0)) throw ConfigError("mne: lambda grid values must be positive");
  if (mne.n_folds < 2) throw ConfigError("mne: at least two folds required");
}

StftDictionary RunConfig::dictionary(std::size_t samples, double sampling_rate) const {
  const double w = model.window_ms * sampling_rate / 1000.0;
  const double s = model.step_ms * sampling_rate / 1000.0;
  if (std::abs(w - std::round(w)) > 1e-9 || std::abs(s - std::round(s)) > 1e-9)
    throw ConfigError("model: window and step must be whole numbers of samples at " + std::to_string(sampling_rate) + " Hz");
  return StftDictionary::build(samples, static_cast<std::size_t>(std::lround(w)), static_cast<std::size_t>(std::lround(s)),
                               model.window);
}

DataSplit make_split(const TrialDataset& data, bool split) {
  if (split) return split_halves(data);
  DataSplit out;
  out.first = data;
  out.second = data;
  for (std::size_t r = 0; r < data.q(); ++r) {
    out.first_trials.push_back(r);
    out.second_trials.push_back(r);
  }
  return out;
}

namespace {

std::vector<std::size_t> parity_folds(std::size_t q) {
  std::vector<std::size_t> f(q);
  for (std::size_t r = 0; r < q; ++r) f[r] = r % 2;
  return f;
}

std::vector<double> scaled(const std::vector<double>& grid, double scale) {
  std::vector<double> out;
  for (double v : grid) out.push_back(v * scale);
  return out;
}

}  // namespace

StftrFit fit_stftr(const TrialDataset& data, const StftDictionary& dict, const std::vector<NamedRoi>& rois,
                   const RunConfig& config, std::size_t threads) {
  config.validate();
  data.validate();
  if (dict.samples() != data.T()) throw DimensionError("fit: dictionary length differs from the recordings");
  if (config.penalty.weight_policy == WeightPolicy::roi_zero && rois.empty())
    throw ConfigError("penalty: the roi-zero weight policy needs at least one ROI");
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& r : rois) sets.push_back(r.sources);
  const GroupTree tmpl =
      build_group_tree(sets, data.m(), dict.size(), data.p(), 1.0, 1.0, 1.0, config.penalty.weight_policy);

  StftrFit fit;
  fit.split = make_split(data, config.split_halves);
  const TrialDataset& first = fit.split.first;
  const TrialDataset& second = fit.split.second;

  if (config.penalty.alpha) {
    fit.alpha = *config.penalty.alpha;
    fit.beta = *config.penalty.beta;
    fit.gamma = *config.penalty.gamma;
  } else {
    CvPlan plan = CvPlan::interleaved(first.q(), std::min(config.cv.n_folds, first.q()));
    plan.alpha_grid = config.cv.alpha_grid;
    plan.beta_grid = config.cv.beta_grid;
    plan.gamma_grid = config.cv.gamma_grid;
    plan.lambda2_grid = config.cv.lambda2_grid;
    plan.gamma_policy = config.cv.gamma_policy;
    plan.gamma_fixed = config.cv.gamma_fixed;
    fit.cv = cross_validate(first, dict, tmpl, plan, config.solver, config.refit, threads);
    fit.alpha = fit.cv->alpha;
    fit.beta = fit.cv->beta;
    fit.gamma = fit.cv->gamma;
    fit.warnings = fit.cv->warnings;
  }

  ForwardModel selector(first, dict);
  fit.solve = active_set_solve(selector, tmpl.with_penalties(fit.alpha, fit.beta, fit.gamma), config.solver,
                               config.initial_active);
  fit.z_sparse = fit.solve.z;
  fit.support = support_of(fit.z_sparse);
  if (!fit.solve.converged) fit.warnings.push_back("solver: active-set KKT tolerance not reached");

  ForwardModel estimator(second, dict);
  if (fit.support.empty()) {
    fit.z = estimator.zeros();
    fit.warnings.push_back("fit: empty support; refit skipped");
    return fit;
  }
  const auto grid = scaled(config.cv.lambda2_grid, ridge_scale(estimator));
  const auto folds = parity_folds(second.q());
  fit.lambda2 = second.q() >= 4 ? select_lambda2(second, dict, fit.support, grid, folds, config.refit) : grid.front();
  const auto refit = l2_refit(estimator, fit.support, fit.lambda2, config.refit);
  if (!refit.converged) fit.warnings.push_back("refit: conjugate gradients did not reach cg_tol");
  fit.z = refit.z;
  return fit;
}

MnerFit fit_mner(const TrialDataset& data, const StftDictionary& dict, const RunConfig& config, std::size_t threads) {
  config.validate();
  data.validate();
  if (dict.samples() != data.T()) throw DimensionError("fit: dictionary length differs from the recordings");
  MnerFit fit;
  fit.split = make_split(data, config.split_halves);
  const TrialDataset& second = fit.split.second;
  const auto grid = scaled(config.mne.lambda_grid, mne_lambda_scale(second.G));
  const auto plan = CvPlan::interleaved(second.q(), std::min(config.mne.n_folds, second.q()));
  fit.lambda = select_mne_lambda(second, dict, grid, plan.fold_of_trial, threads);
  fit.regression = mne_fit(second, dict, fit.lambda);
  return fit;
}

InferenceResult bootstrap_stftr(const StftrFit& fit, const StftDictionary& dict, const RunConfig& config,
                                std::size_t threads) {
  if (fit.support.empty()) throw ConfigError("bootstrap: the fit has an empty support");
  ForwardModel estimator(fit.split.second, dict);
  BootstrapConfig cfg;
  cfg.B = config.bootstrap.B;
  cfg.seed = config.bootstrap.seed;
  cfg.threads = threads;
  cfg.lambda2_grid = scaled(config.cv.lambda2_grid, ridge_scale(estimator));
  return residual_bootstrap(fit.split.second, dict, fit.support, fit.z, cfg, config.refit);
}

InferenceResult bootstrap_mner(const MnerFit& fit, const StftDictionary& dict, const RunConfig& config,
                               std::size_t threads) {
  return mne_bootstrap(fit.regression, dict, fit.split.second.X, config.bootstrap.B, config.bootstrap.seed, threads);
}

std::vector<NamedRoi> simulation_rois(const SimulationSpec& spec) {
  std::vector<NamedRoi> out;
  for (const auto& r : spec.regions) out.push_back({r.name, r.sources});
  return out;
}

StudyRun run_study(const SimulationSpec& spec, const RunConfig& config, std::size_t threads) {
  const auto [raw, truth] = generate_dataset(spec);
  const auto dict = config.dictionary(spec.T, spec.sampling_rate);
  if (dict.window_length() != spec.window || dict.step() != spec.step)
    throw ConfigError("study: configured STFT geometry differs from the simulation's");
  const bool noisy = truth.noise_covariance.cwiseAbs().maxCoeff() > 0.0;
  const TrialDataset data = noisy ? prewhiten(raw, truth.noise_covariance) : raw;

  StudyRun run;
  run.seed = spec.seed;
  const auto rois = simulation_rois(spec);
  const StftrFit sf = fit_stftr(data, dict, rois, config, threads);
  const MnerFit mf = fit_mner(data, dict, config, threads);
  run.stftr_converged = sf.solve.converged;
  for (std::size_t i = 0; i < sf.z.m(); ++i) run.support_rows += sf.z.row_is_zero(i) ? 0 : 1;

  std::vector<RowMatrix> noiseless;
  for (std::size_t r : sf.split.second_trials) noiseless.push_back(truth.noiseless_sources[r]);
  const auto est_s = reconstruct_all(sf.z, sf.split.second.X, dict);
  const auto est_m = reconstruct_all(mf.regression.z, mf.split.second.X, dict);
  const auto roi_scope = spec.roi_sources();
  std::vector<std::size_t> all(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) all[i] = i;
  run.mse_stftr_roi = rectified_mse(est_s, noiseless, roi_scope);
  run.mse_mner_roi = rectified_mse(est_m, noiseless, roi_scope);
  run.mse_stftr_all = rectified_mse(est_s, noiseless, all);
  run.mse_mner_all = rectified_mse(est_m, noiseless, all);
  run.ratio_roi = mse_ratio(run.mse_stftr_roi, run.mse_mner_roi);
  run.ratio_all = mse_ratio(run.mse_stftr_all, run.mse_mner_all);

  run.avg_abs_t_stftr = RowMatrix::Zero(static_cast<Eigen::Index>(dict.n_freqs()), static_cast<Eigen::Index>(dict.n_windows()));
  run.avg_abs_t_mner = run.avg_abs_t_stftr;
  const std::size_t slope = sf.z.p() > 1 ? 1 : 0;
  if (!sf.support.empty()) {
    const auto bs = bootstrap_stftr(sf, dict, config, threads);
    run.degenerate_se = bs.degenerate_se();
    for (const auto& region : spec.regions)
      if (region.target) run.avg_abs_t_stftr += averaged_absolute_t(bs, dict, region.sources, slope);
  }
  const auto bm = bootstrap_mner(mf, dict, config, threads);
  for (const auto& region : spec.regions)
    if (region.target) run.avg_abs_t_mner += averaged_absolute_t(bm, dict, region.sources, slope);
  run.low_freq_stftr = low_frequency_fraction(run.avg_abs_t_stftr);
  run.low_freq_mner = low_frequency_fraction(run.avg_abs_t_mner);
  return run;
}

}  // namespace stftr

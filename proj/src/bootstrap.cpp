#include "stftr/bootstrap.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/parallel.hpp"
#include "stftr/rng.hpp"

namespace stftr {

DataSplit split_halves(const TrialDataset& data) {
  if (data.q() < 4) throw ConfigError("split_halves: at least four trials required, got " + std::to_string(data.q()));
  DataSplit out;
  for (std::size_t r = 0; r < data.q(); ++r) (r % 2 == 0 ? out.first_trials : out.second_trials).push_back(r);
  out.first = data.subset(out.first_trials);
  out.second = data.subset(out.second_trials);
  center_covariates(out.first.X);
  center_covariates(out.second.X);
  return out;
}

std::vector<double> leverage(const RowMatrix& X) {
  const Eigen::MatrixXd Xd = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xd);
  if (qr.rank() < Xd.cols()) {
    std::string cols;
    for (Eigen::Index c = qr.rank(); c < Xd.cols(); ++c) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(qr.colsPermutation().indices()(c));
    }
    throw NumericalError("leverage: X^T X is singular; collinear design column(s) " + cols);
  }
  const Eigen::MatrixXd xtx_inv = (Xd.transpose() * Xd).inverse();
  std::vector<double> h(static_cast<std::size_t>(Xd.rows()));
  for (Eigen::Index r = 0; r < Xd.rows(); ++r) h[static_cast<std::size_t>(r)] = Xd.row(r) * xtx_inv * Xd.row(r).transpose();
  return h;
}

std::vector<std::size_t> draw_trials(std::uint64_t seed, std::size_t replicate, std::size_t q) {
  auto gen = make_stream(seed, replicate);
  std::vector<std::size_t> draw(q);
  for (auto& d : draw) d = static_cast<std::size_t>(uniform_index(gen, q));
  return draw;
}

std::vector<RowMatrix> rescaled_residuals(const TrialDataset& data, const StftDictionary& dict,
                                          const CoefTensor& z) {
  const auto h = leverage(data.X);
  std::vector<RowMatrix> out;
  out.reserve(data.q());
  for (std::size_t r = 0; r < data.q(); ++r) {
    if (!(h[r] < 1.0)) throw NumericalError("bootstrap: trial " + std::to_string(r) + " has leverage 1");
    out.push_back((data.M[r] - predict_trial(z, data, dict, r)) / std::sqrt(1.0 - h[r]));
  }
  return out;
}

TrialDataset bootstrap_dataset(const TrialDataset& data, const std::vector<RowMatrix>& predictions,
                               const std::vector<RowMatrix>& residuals, std::span<const std::size_t> draw) {
  TrialDataset out;
  out.G = data.G;
  out.X = data.X;
  out.sampling_rate = data.sampling_rate;
  out.whitened = data.whitened;
  out.M.reserve(data.q());
  for (std::size_t r = 0; r < data.q(); ++r) out.M.push_back(predictions[r] + residuals[draw[r]]);
  return out;
}

InferenceResult residual_bootstrap(const TrialDataset& data, const StftDictionary& dict,
                                   std::span<const std::size_t> support, const CoefTensor& z_l2,
                                   const BootstrapConfig& config, const RefitConfig& refit) {
  if (config.B < 2) throw ConfigError("bootstrap: B must be at least 2");
  if (config.lambda2_grid.empty()) throw ConfigError("bootstrap: lambda2 grid is empty");
  if (support.empty()) throw ConfigError("bootstrap: empty support");
  data.validate(false);
  std::vector<bool> on_support(z_l2.size(), false);
  for (std::size_t f : support) {
    if (f >= z_l2.size()) throw DimensionError("bootstrap: support index out of range");
    on_support[f] = true;
  }
  for (std::size_t f = 0; f < z_l2.size(); ++f)
    if (!on_support[f] && z_l2[f] != cplx{}) throw ConfigError("bootstrap: estimate has entries off the support");

  const std::size_t q = data.q();
  std::vector<RowMatrix> predictions;
  predictions.reserve(q);
  for (std::size_t r = 0; r < q; ++r) predictions.push_back(predict_trial(z_l2, data, dict, r));
  const auto residuals = rescaled_residuals(data, dict, z_l2);
  std::vector<std::size_t> parity(q);
  for (std::size_t r = 0; r < q; ++r) parity[r] = r % 2;

  std::vector<CoefTensor> replicates(config.B);
  std::vector<double> lambdas(config.B);
  parallel_for(config.B, config.threads, [&](std::size_t b) {
    const auto draw = draw_trials(config.seed, b, q);
    const TrialDataset boot = bootstrap_dataset(data, predictions, residuals, draw);
    lambdas[b] = select_lambda2(boot, dict, support, config.lambda2_grid, parity, refit);
    ForwardModel model(boot, dict);
    replicates[b] = l2_refit(model, support, lambdas[b], refit).z;
  });

  InferenceResult result;
  result.estimate = z_l2;
  result.support.assign(support.begin(), support.end());
  std::sort(result.support.begin(), result.support.end());
  result.B = config.B;
  result.seed = config.seed;
  result.replicate_lambda2 = lambdas;
  const std::size_t p = z_l2.p(), s = z_l2.s();
  summarize_replicates(result, replicates,
                       [&](std::size_t f, int part) { return part == 0 || !dict.real_row((f / p) % s); });
  return result;
}

RowMatrix averaged_absolute_t(const InferenceResult& result, const StftDictionary& dict,
                              std::span<const std::size_t> roi, std::size_t covariate) {
  const CoefTensor& est = result.estimate;
  if (roi.empty()) throw ConfigError("averaged_absolute_t: empty ROI");
  if (est.s() != dict.size()) throw DimensionError("averaged_absolute_t: dictionary size mismatch");
  if (covariate >= est.p()) throw DimensionError("averaged_absolute_t: covariate out of range");
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(dict.n_freqs()), static_cast<Eigen::Index>(dict.n_windows()));
  for (std::size_t j = 0; j < dict.size(); ++j) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i : roi) {
      if (i >= est.m()) throw DimensionError("averaged_absolute_t: ROI index out of range");
      if (est(i, j, covariate) == cplx{}) continue;
      const cplx t = result.t_stat(i, j, covariate);
      acc += dict.real_row(j) ? std::abs(t.real()) : 0.5 * (std::abs(t.real()) + std::abs(t.imag()));
      ++count;
    }
    if (count > 0)
      out(static_cast<Eigen::Index>(dict.freq_of(j)), static_cast<Eigen::Index>(dict.shift_of(j))) =
          acc / static_cast<double>(count);
  }
  return out;
}

double low_frequency_fraction(const RowMatrix& avg_abs_t, std::size_t rows) {
  const double total = avg_abs_t.sum();
  if (!(total > 0.0)) return 0.0;
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(rows), avg_abs_t.rows());
  return avg_abs_t.topRows(k).sum() / total;
}

}  // namespace stftr

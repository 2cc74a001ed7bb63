#include "stftr/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"
#include "stftr/rng.hpp"

namespace stftr {

namespace {

void check_dims(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict) {
  if (z.m() != data.m() || z.s() != dict.size() || z.p() != data.p())
    throw DimensionError("coefficient tensor is " + std::to_string(z.m()) + "x" + std::to_string(z.s()) + "x" +
                         std::to_string(z.p()) + ", expected " + std::to_string(data.m()) + "x" +
                         std::to_string(dict.size()) + "x" + std::to_string(data.p()));
  if (data.T() != dict.samples()) throw DimensionError("trial length differs from the dictionary length");
}

// Per-covariate synthesized source blocks S_k (|rows| x T), stored k-major.
std::vector<double> synthesize_blocks(const CoefTensor& z, std::span<const std::size_t> rows,
                                      const StftDictionary& dict) {
  const std::size_t T = dict.samples();
  const std::size_t p = z.p();
  const std::size_t s = dict.size();
  std::vector<double> blocks(p * rows.size() * T, 0.0);
  std::vector<cplx> gathered(rows.size() * s);
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t j = 0; j < s; ++j) gathered[a * s + j] = z(rows[a], j, k);
    dict.synthesize_many(gathered.data(), rows.size(), blocks.data() + k * rows.size() * T);
  }
  return blocks;
}

// Analysis of `count` series into rows `rows` of covariate slice k of out.
void analyze_into(const StftDictionary& dict, const double* series, std::span<const std::size_t> rows, std::size_t k,
                  CoefTensor& out) {
  const std::size_t s = dict.size();
  std::vector<cplx> coefs(rows.size() * s);
  dict.analyze_many(series, rows.size(), coefs.data());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t j = 0; j < s; ++j) out(rows[a], j, k) = coefs[a * s + j];
}

// G[:, rows] S_k for every k (n x T each), k-major.
std::vector<double> project_blocks(const RowMatrix& G, std::span<const std::size_t> rows,
                                   const std::vector<double>& blocks, std::size_t p, std::size_t T) {
  const std::size_t n = static_cast<std::size_t>(G.rows());
  std::vector<double> gsub(n * rows.size());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < rows.size(); ++a)
      gsub[s * rows.size() + a] = G(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(rows[a]));
  std::vector<double> out(p * n * T, 0.0);
  const auto& k = kernels::active();
  for (std::size_t c = 0; c < p; ++c)
    k.gemm_acc(gsub.data(), rows.size(), blocks.data() + c * rows.size() * T, T, out.data() + c * n * T, T, n,
               rows.size(), T);
  return out;
}

// sum_k X(r, k) GS_k, accumulated in k order.
void combine_trial(const std::vector<double>& projected, const RowMatrix& X, std::size_t r, std::size_t n,
                   std::size_t T, double* pred) {
  std::fill(pred, pred + n * T, 0.0);
  const auto& kt = kernels::active();
  for (std::size_t k = 0; k < static_cast<std::size_t>(X.cols()); ++k) {
    const double x = X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    if (x == 0.0) continue;
    kt.axpy(x, projected.data() + k * n * T, pred, n * T);
  }
}

double trial_objective(const TrialDataset& data, const std::vector<double>& projected) {
  const std::size_t n = data.n();
  const std::size_t T = data.T();
  std::vector<double> pred(n * T);
  double acc = 0.0;
  for (std::size_t r = 0; r < data.q(); ++r) {
    combine_trial(projected, data.X, r, n, T, pred.data());
    const double* m = data.M[r].data();
    double trial = 0.0;
    for (std::size_t e = 0; e < n * T; ++e) {
      const double d = m[e] - pred[e];
      trial += d * d;
    }
    acc += trial;
  }
  return 0.5 * acc;
}

}  // namespace

RowMatrix predict_trial(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict,
                        std::size_t r) {
  check_dims(z, data, dict);
  if (r >= data.q()) throw DimensionError("predict_trial: trial index out of range");
  const auto rows = z.nonzero_rows();
  const auto blocks = synthesize_blocks(z, rows, dict);
  const auto projected = project_blocks(data.G, rows, blocks, z.p(), dict.samples());
  RowMatrix pred(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(dict.samples()));
  combine_trial(projected, data.X, r, data.n(), dict.samples(), pred.data());
  return pred;
}

RowMatrix source_series(const CoefTensor& z, std::span<const double> covariates, const StftDictionary& dict) {
  if (covariates.size() != z.p() || z.s() != dict.size())
    throw DimensionError("source_series: covariate or dictionary size mismatch");
  const std::size_t T = dict.samples();
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(z.m()), static_cast<Eigen::Index>(T));
  std::vector<cplx> combined(z.s());
  for (std::size_t i = 0; i < z.m(); ++i) {
    if (z.row_is_zero(i)) continue;
    for (std::size_t j = 0; j < z.s(); ++j) {
      cplx v{};
      for (std::size_t k = 0; k < z.p(); ++k) v += covariates[k] * z(i, j, k);
      combined[j] = v;
    }
    dict.synthesize(combined.data(), 1, out.data() + i * T);
  }
  return out;
}

double objective(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict) {
  check_dims(z, data, dict);
  const auto rows = z.nonzero_rows();
  const auto blocks = synthesize_blocks(z, rows, dict);
  return trial_objective(data, project_blocks(data.G, rows, blocks, z.p(), dict.samples()));
}

CoefTensor gradient(const CoefTensor& z, const TrialDataset& data, const StftDictionary& dict) {
  check_dims(z, data, dict);
  return ForwardModel(data, dict).gradient(z);
}

ForwardModel::ForwardModel(const TrialDataset& data, const StftDictionary& dict)
    : data_(&data), dict_(&dict), m_(data.m()), p_(data.p()) {
  data.validate(false);
  if (data.T() != dict.samples()) throw DimensionError("trial length differs from the dictionary length");
  gtg_ = data.G.transpose() * data.G;
  xtx_ = data.X.transpose() * data.X;
  all_rows_.resize(m_);
  std::iota(all_rows_.begin(), all_rows_.end(), std::size_t{0});

  const std::size_t T = dict.samples();
  atb_ = CoefTensor(m_, dict.size(), p_);
  for (std::size_t k = 0; k < p_; ++k) {
    RowMatrix weighted = RowMatrix::Zero(data.G.rows(), static_cast<Eigen::Index>(T));
    for (std::size_t r = 0; r < data.q(); ++r)
      weighted += data.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * data.M[r];
    const RowMatrix back = data.G.transpose() * weighted;
    analyze_into(dict, back.data(), all_rows_, k, atb_);
  }
}

void ForwardModel::normal_apply(const CoefTensor& z, std::span<const std::size_t> in_rows,
                                std::span<const std::size_t> out_rows, CoefTensor& out) const {
  const std::size_t T = dict_->samples();
  const std::size_t nin = in_rows.size();
  const std::size_t nout = out_rows.size();
  if (nin == 0) {
    for (std::size_t i : out_rows) std::fill(out.row(i).begin(), out.row(i).end(), cplx{});
    return;
  }
  const auto& kt = kernels::active();
  const auto synth = synthesize_blocks(z, in_rows, *dict_);

  // W_k = sum_k' (X^T X)(k, k') S_k'
  std::vector<double> mixed(p_ * nin * T, 0.0);
  for (std::size_t k = 0; k < p_; ++k)
    for (std::size_t c = 0; c < p_; ++c) {
      const double w = xtx_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
      if (w != 0.0) kt.axpy(w, synth.data() + c * nin * T, mixed.data() + k * nin * T, nin * T);
    }

  std::vector<double> gram(nout * nin);
  for (std::size_t o = 0; o < nout; ++o)
    for (std::size_t a = 0; a < nin; ++a)
      gram[o * nin + a] = gtg_(static_cast<Eigen::Index>(out_rows[o]), static_cast<Eigen::Index>(in_rows[a]));

  std::vector<double> back(nout * T);
  for (std::size_t k = 0; k < p_; ++k) {
    std::fill(back.begin(), back.end(), 0.0);
    kt.gemm_acc(gram.data(), nin, mixed.data() + k * nin * T, T, back.data(), T, nout, nin, T);
    analyze_into(*dict_, back.data(), out_rows, k, out);
  }
}

void ForwardModel::gradient(const CoefTensor& z, std::span<const std::size_t> in_rows,
                            std::span<const std::size_t> out_rows, CoefTensor& out) const {
  normal_apply(z, in_rows, out_rows, out);
  const auto& kt = kernels::active();
  for (std::size_t i : out_rows) kt.axpy(-1.0, atb_.row_reals(i).data(), out.row_reals(i).data(), 2 * atb_.row_size());
}

CoefTensor ForwardModel::gradient(const CoefTensor& z) const {
  if (z.m() != m_ || z.s() != s() || z.p() != p_) throw DimensionError("gradient: tensor shape mismatch");
  CoefTensor out = zeros();
  gradient(z, z.nonzero_rows(), all_rows_, out);
  return out;
}

double ForwardModel::objective(const CoefTensor& z, std::span<const std::size_t> rows) const {
  const auto blocks = synthesize_blocks(z, rows, *dict_);
  return trial_objective(*data_, project_blocks(data_->G, rows, blocks, p_, dict_->samples()));
}

double ForwardModel::objective(const CoefTensor& z) const { return objective(z, z.nonzero_rows()); }

LipschitzEstimate ForwardModel::lipschitz(std::span<const std::size_t> rows, double tol, std::size_t max_iter,
                                          std::uint64_t seed) const {
  LipschitzEstimate est;
  if (rows.empty()) {
    est.converged = true;
    return est;
  }
  auto gen = make_stream(seed, rows.size());
  std::normal_distribution<double> normal;
  CoefTensor v = zeros();
  for (std::size_t i : rows)
    for (double& x : v.row_reals(i)) x = normal(gen);
  auto normalize = [&](CoefTensor& t) {
    double sq = 0.0;
    for (std::size_t i : rows) sq += kernels::sum_sq(t.row_reals(i));
    const double nrm = std::sqrt(sq);
    if (nrm > 0.0)
      for (std::size_t i : rows) kernels::scale(1.0 / nrm, t.row_reals(i));
    return nrm;
  };
  normalize(v);
  CoefTensor w = zeros();
  double lambda = 0.0;
  for (est.iterations = 1; est.iterations <= max_iter; ++est.iterations) {
    normal_apply(v, rows, rows, w);
    const double next = normalize(w);
    std::swap(v, w);
    if (!std::isfinite(next)) throw NumericalError("lipschitz: power iteration produced a non-finite value");
    if (next == 0.0) {
      lambda = 0.0;
      est.converged = true;
      break;
    }
    if (std::abs(next - lambda) <= tol * next) {
      lambda = next;
      est.converged = true;
      break;
    }
    lambda = next;
  }
  est.iterations = std::min(est.iterations, max_iter);
  est.raw = lambda;
  est.value = kLipschitzSafety * lambda;
  return est;
}

LipschitzEstimate lipschitz_constant(const TrialDataset& data, const StftDictionary& dict, double tol,
                                     std::size_t max_iter) {
  if (data.G.isZero(0.0) || data.X.isZero(0.0)) throw NumericalError("lipschitz: degenerate operator");
  ForwardModel model(data, dict);
  return model.lipschitz(model.all_rows(), tol, max_iter);
}

}  // namespace stftr

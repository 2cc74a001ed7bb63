#include "stftr/simulator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/rng.hpp"

namespace stftr {

namespace {

constexpr std::uint64_t kForwardStream = 0x46;
constexpr std::uint64_t kMixingStream = 0x4d;
constexpr std::uint64_t kTrialStreamBase = 0x1000;

std::vector<std::size_t> range(std::size_t lo, std::size_t count) {
  std::vector<std::size_t> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = lo + i;
  return v;
}

}  // namespace

SimulationSpec SimulationSpec::desk_default(std::uint64_t seed) {
  SimulationSpec s;
  s.seed = seed;
  s.regions = {
      {"target-a", range(20, 10), true, {0.35, 0.08, 2.0, 1.0}},
      {"target-b", range(80, 10), true, {0.60, 0.10, 4.0, 1.0}},
      {"irrelevant-a", range(130, 10), false, {}},
      {"irrelevant-b", range(170, 10), false, {}},
  };
  return s;
}

void SimulationSpec::validate() const {
  if (n == 0 || m == 0 || T == 0) throw ConfigError("simulation: n, m and T must be positive");
  if (q < 2) throw ConfigError("simulation: at least two trials required");
  if (!(sampling_rate > 0.0)) throw ConfigError("simulation: sampling rate must be positive");
  if (!(noise_level >= 0.0)) throw ConfigError("simulation: noise_level must be nonnegative");
  if (!(snr > 0.0) && !snr_db) throw ConfigError("simulation: snr must be positive");
  if (!(gp_length_scale > 0.0)) throw ConfigError("simulation: gp_length_scale must be positive");
  if (iir_order == 0) throw ConfigError("simulation: iir_order must be positive");
  std::vector<bool> used(m, false);
  for (const auto& r : regions) {
    if (r.sources.empty()) throw ConfigError("simulation: region '" + r.name + "' is empty");
    for (std::size_t i : r.sources) {
      if (i >= m) throw ConfigError("simulation: region '" + r.name + "' index " + std::to_string(i) + " out of range");
      if (used[i]) throw ConfigError("simulation: regions overlap at source " + std::to_string(i));
      used[i] = true;
    }
    if (r.target) {
      if (!(r.gabor.carrier >= 0.0) || r.gabor.carrier >= 0.5 * sampling_rate)
        throw ConfigError("simulation: region '" + r.name + "' carrier is not below Nyquist");
      if (!(r.gabor.width > 0.0)) throw ConfigError("simulation: region '" + r.name + "' Gabor width must be positive");
    }
  }
  StftDictionary::build(T, window, step);
}

std::vector<std::vector<std::size_t>> SimulationSpec::roi_sets() const {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& r : regions) out.push_back(r.sources);
  return out;
}

std::vector<std::size_t> SimulationSpec::target_sources() const {
  std::vector<std::size_t> out;
  for (const auto& r : regions)
    if (r.target) out.insert(out.end(), r.sources.begin(), r.sources.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> SimulationSpec::roi_sources() const {
  std::vector<std::size_t> out;
  for (const auto& r : regions) out.insert(out.end(), r.sources.begin(), r.sources.end());
  std::sort(out.begin(), out.end());
  return out;
}

double SimulationSpec::snr_linear() const { return snr_db ? std::pow(10.0, snr / 10.0) : snr; }

RowMatrix make_forward(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n == 0 || m == 0) throw ConfigError("make_forward: empty dimensions");
  if (n >= m) std::cerr << "warning: make_forward with n >= m (" << n << " >= " << m << ") is not underdetermined\n";
  auto gen = make_stream(seed, kForwardStream);
  std::normal_distribution<double> normal;
  RowMatrix raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index e = 0; e < raw.size(); ++e) raw.data()[e] = normal(gen);
  RowMatrix G(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < G.cols(); ++i) {
    G.col(i) = raw.col(i);
    if (i > 0) G.col(i) += 0.5 * raw.col(i - 1);
    G.col(i).normalize();
  }
  constexpr double kMaxCoherence = 0.98;
  for (Eigen::Index i = 1; i < G.cols(); ++i) {
    for (int attempt = 0;; ++attempt) {
      double worst = 0.0;
      for (Eigen::Index k = 0; k < i; ++k) worst = std::max(worst, std::abs(G.col(i).dot(G.col(k))));
      if (worst <= kMaxCoherence) break;
      if (attempt > 1000) throw NumericalError("make_forward: cannot meet the coherence bound");
      for (Eigen::Index a = 0; a < G.rows(); ++a) G(a, i) = normal(gen);
      G.col(i).normalize();
    }
  }
  return G;
}

SigmoidCurve sigmoid_curve(std::size_t q, const SigmoidParams& params) {
  if (q < 2) throw ConfigError("sigmoid_curve: at least two trials required");
  const double mid = params.midpoint < 0.0 ? 0.5 * static_cast<double>(q) : params.midpoint;
  SigmoidCurve c;
  c.raw.resize(q);
  for (std::size_t r = 0; r < q; ++r) {
    const double x = params.rate * (static_cast<double>(r) + 0.5 - mid);
    c.raw[r] = params.scale / (1.0 + std::exp(-x));
  }
  double mean = 0.0;
  for (double v : c.raw) mean += v;
  mean /= static_cast<double>(q);
  c.centered.resize(q);
  for (std::size_t r = 0; r < q; ++r) c.centered[r] = c.raw[r] - mean;
  return c;
}

std::vector<double> sensor_filter(std::size_t order) {
  // Coefficients of (1 - 0.5 z^{-1})^order.
  std::vector<double> a{1.0};
  for (std::size_t o = 0; o < order; ++o) {
    std::vector<double> next(a.size() + 1, 0.0);
    for (std::size_t k = 0; k < a.size(); ++k) {
      next[k] += a[k];
      next[k + 1] -= 0.5 * a[k];
    }
    a = std::move(next);
  }
  return a;
}

double sensor_filter_gain(std::size_t order) {
  const auto a = sensor_filter(order);
  std::vector<double> h;
  double gain = 0.0;
  for (std::size_t t = 0; t < 4096; ++t) {
    double v = t == 0 ? 1.0 : 0.0;
    for (std::size_t k = 1; k < a.size() && k <= t; ++k) v -= a[k] * h[t - k];
    h.push_back(v);
    gain += v * v;
  }
  return gain;
}

std::vector<double> gabor_waveform(const GaborParams& g, std::size_t T, double sampling_rate) {
  std::vector<double> w(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double sec = static_cast<double>(t) / sampling_rate;
    const double d = (sec - g.center) / g.width;
    w[t] = g.amplitude * std::exp(-0.5 * d * d) * std::cos(2.0 * std::numbers::pi * g.carrier * (sec - g.center));
  }
  return w;
}

std::pair<TrialDataset, GroundTruth> generate_dataset(const SimulationSpec& spec) {
  spec.validate();
  const auto dict = StftDictionary::build(spec.T, spec.window, spec.step);
  const std::size_t s = dict.size();
  const auto curve = sigmoid_curve(spec.q, spec.curve);

  TrialDataset data;
  data.sampling_rate = spec.sampling_rate;
  data.G = make_forward(spec.n, spec.m, spec.seed);
  data.X = design_from_covariate(curve.raw);

  GroundTruth truth;
  truth.curve = curve.raw;
  truth.z_true = CoefTensor(spec.m, s, 2);
  for (const auto& region : spec.regions) {
    if (!region.target) continue;
    const auto coefs = dict.analyze(gabor_waveform(region.gabor, spec.T, spec.sampling_rate));
    for (std::size_t i : region.sources)
      for (std::size_t j = 0; j < s; ++j) {
        truth.z_true(i, j, 0) = coefs[j];
        truth.z_true(i, j, 1) = coefs[j];
      }
  }
  for (std::size_t r = 0; r < spec.q; ++r) {
    const double xr[2] = {data.X(static_cast<Eigen::Index>(r), 0), data.X(static_cast<Eigen::Index>(r), 1)};
    truth.noiseless_sources.push_back(source_series(truth.z_true, xr, dict));
    truth.peak_amplitude = std::max(truth.peak_amplitude, truth.noiseless_sources.back().cwiseAbs().maxCoeff());
  }

  // Source noise: squared-exponential Gaussian process per source point.
  truth.source_noise_sd = spec.noise_level * truth.peak_amplitude;
  Eigen::MatrixXd chol;
  if (truth.source_noise_sd > 0.0) {
    Eigen::MatrixXd K(spec.T, spec.T);
    for (std::size_t a = 0; a < spec.T; ++a)
      for (std::size_t b = 0; b < spec.T; ++b) {
        const double d = (static_cast<double>(a) - static_cast<double>(b)) / spec.gp_length_scale;
        K(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = std::exp(-0.5 * d * d);
      }
    K.diagonal().array() += 1e-8;
    chol = Eigen::LLT<Eigen::MatrixXd>(K).matrixL();
  }

  const auto a = sensor_filter(spec.iir_order);
  const double gain = sensor_filter_gain(spec.iir_order);
  auto mix_gen = make_stream(spec.seed, kMixingStream);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(spec.n, spec.n);
  for (Eigen::Index i = 0; i < L.rows(); ++i)
    for (Eigen::Index k = 0; k < L.cols(); ++k) L(i, k) += 0.3 * normal(mix_gen) / std::sqrt(static_cast<double>(spec.n));

  std::vector<RowMatrix> clean(spec.q);
  std::vector<RowMatrix> white(spec.q);
  double signal_power = 0.0;
  constexpr std::size_t kBurnIn = 200;
  for (std::size_t r = 0; r < spec.q; ++r) {
    auto gen = make_stream(spec.seed, kTrialStreamBase + r);
    RowMatrix noise = RowMatrix::Zero(static_cast<Eigen::Index>(spec.m), static_cast<Eigen::Index>(spec.T));
    Eigen::VectorXd e(spec.T);
    for (std::size_t i = 0; i < spec.m; ++i) {
      for (std::size_t t = 0; t < spec.T; ++t) e(static_cast<Eigen::Index>(t)) = normal(gen);
      if (truth.source_noise_sd > 0.0) noise.row(static_cast<Eigen::Index>(i)) = truth.source_noise_sd * (chol * e).transpose();
    }
    truth.source_noise.push_back(noise);
    clean[r] = data.G * (truth.noiseless_sources[r] + noise);
    signal_power += clean[r].squaredNorm();

    // Filtered white streams, one per sensor, then spatial mixing.
    RowMatrix filtered(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.T));
    std::vector<double> hist(kBurnIn + spec.T);
    for (std::size_t c = 0; c < spec.n; ++c) {
      for (std::size_t t = 0; t < hist.size(); ++t) {
        double v = normal(gen);
        for (std::size_t k = 1; k < a.size() && k <= t; ++k) v -= a[k] * hist[t - k];
        hist[t] = v;
      }
      for (std::size_t t = 0; t < spec.T; ++t)
        filtered(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = hist[kBurnIn + t];
    }
    white[r] = L * filtered;
  }
  signal_power /= static_cast<double>(spec.q * spec.n * spec.T);

  const double snr = spec.snr_linear();
  const Eigen::MatrixXd unit_cov = gain * L * L.transpose();
  double scale = 0.0;
  if (std::isfinite(snr) && signal_power > 0.0) {
    const double unit_power = unit_cov.trace() / static_cast<double>(spec.n);
    scale = std::sqrt(signal_power / (snr * unit_power));
  }
  truth.noise_covariance = scale * scale * unit_cov;
  for (std::size_t r = 0; r < spec.q; ++r) {
    if (scale > 0.0)
      data.M.push_back(clean[r] + scale * white[r]);
    else
      data.M.push_back(clean[r]);
  }
  return {std::move(data), std::move(truth)};
}

TrialDataset prewhiten(const TrialDataset& data, const RowMatrix& covariance) {
  const auto n = data.G.rows();
  if (covariance.rows() != n || covariance.cols() != n) throw DimensionError("prewhiten: covariance shape mismatch");
  const double scale = std::max(covariance.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("prewhiten: covariance is not symmetric");
  const Eigen::MatrixXd cov = covariance;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0))
    throw NumericalError("prewhiten: covariance is not positive definite");
  const Eigen::MatrixXd W =
      eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  TrialDataset out = data;
  out.G = W * data.G;
  for (auto& M : out.M) M = W * M;
  out.whitened = true;
  return out;
}

}  // namespace stftr

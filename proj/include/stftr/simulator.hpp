#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stftr/dataset.hpp"
#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

struct GaborParams {
  double center = 0.4;   // seconds
  double width = 0.1;    // Gaussian envelope SD, seconds
  double carrier = 3.0;  // Hz
  double amplitude = 1.0;
};

struct RegionSpec {
  std::string name;
  std::vector<std::size_t> sources;
  bool target = true;  // false: ROI handed to the solver but carrying no signal
  GaborParams gabor;
};

struct SigmoidParams {
  double scale = 1.0;
  double midpoint = -1.0;  // in trials; negative means q / 2
  double rate = 0.5;       // per trial
};

struct SimulationSpec {
  std::size_t n = 50;
  std::size_t m = 200;
  std::size_t T = 100;
  std::size_t q = 20;
  double sampling_rate = 100.0;
  std::size_t window = 16;  // STFT window, samples
  std::size_t step = 4;     // STFT step, samples
  std::vector<RegionSpec> regions;
  SigmoidParams curve;
  double noise_level = 0.1;  // source-noise marginal SD / peak signal amplitude
  double snr = 1.0;          // trial-average sensor power ratio; infinity for no sensor noise
  bool snr_db = false;       // interpret snr in decibels
  double gp_length_scale = 5.0;  // samples
  std::size_t iir_order = 5;
  std::uint64_t seed = 0;

  // 2 target + 2 irrelevant regions of 10 sources on the default geometry.
  static SimulationSpec desk_default(std::uint64_t seed = 0);
  void validate() const;
  std::vector<std::vector<std::size_t>> roi_sets() const;
  std::vector<std::size_t> target_sources() const;
  std::vector<std::size_t> roi_sources() const;
  double snr_linear() const;
};

struct GroundTruth {
  CoefTensor z_true;
  std::vector<RowMatrix> noiseless_sources;  // per trial, m x T
  std::vector<RowMatrix> source_noise;       // per trial, m x T
  std::vector<double> curve;                 // raw sigmoid values
  RowMatrix noise_covariance;                // sensor noise, n x n (zero when noise-free)
  double peak_amplitude = 0.0;
  double source_noise_sd = 0.0;
};

// Unit-norm columns with neighbouring-column correlation and pairwise
// |cosine| <= 0.98. n >= m is accepted with a warning on stderr.
RowMatrix make_forward(std::size_t n, std::size_t m, std::uint64_t seed);

struct SigmoidCurve {
  std::vector<double> raw;
  std::vector<double> centered;
};
// Logistic values at trial positions r + 1/2.
SigmoidCurve sigmoid_curve(std::size_t q, const SigmoidParams& params);

// Denominator coefficients a[0..order] (a[0] = 1) of the fixed sensor-noise
// all-pole filter: `order` real poles at 0.5.
std::vector<double> sensor_filter(std::size_t order);
// Stationary output variance of the filter driven by unit white noise.
double sensor_filter_gain(std::size_t order);

std::pair<TrialDataset, GroundTruth> generate_dataset(const SimulationSpec& spec);

// Left-multiplies every M^(r) and G by C^{-1/2}.
TrialDataset prewhiten(const TrialDataset& data, const RowMatrix& covariance);

// Gabor waveform sampled at t / fs.
std::vector<double> gabor_waveform(const GaborParams& g, std::size_t T, double sampling_rate);

}  // namespace stftr

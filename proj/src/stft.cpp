#include "stftr/stft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"

namespace stftr {

WindowKind parse_window_kind(std::string_view name) {
  if (name == "sine" || name == "hann2") return WindowKind::sine;
  if (name == "rectangular") return WindowKind::rectangular;
  throw ConfigError("unknown window kind '" + std::string(name) + "'");
}

std::string_view window_kind_name(WindowKind kind) {
  return kind == WindowKind::sine ? "sine" : "rectangular";
}

StftDictionary StftDictionary::build(std::size_t samples, std::size_t window, std::size_t step,
                                     WindowKind kind) {
  if (samples == 0 || window == 0 || step == 0)
    throw ConfigError("stft: samples, window and step must be positive");
  if (window % 2 != 0) throw ConfigError("stft: window length must be even");
  if (window > samples) throw ConfigError("stft: window longer than the series");
  if (samples % step != 0) throw ConfigError("stft: step does not divide length");
  if (window % step != 0 || window / step < 2)
    throw ConfigError("stft: window/step must be an integer overlap factor >= 2");

  StftDictionary d;
  d.samples_ = samples;
  d.window_ = window;
  d.step_ = step;
  d.n0_ = samples / step;
  d.kind_ = kind;

  const double pi = std::numbers::pi;
  d.base_.resize(window);
  for (std::size_t t = 0; t < window; ++t)
    d.base_[t] = kind == WindowKind::sine ? std::sin(pi * (static_cast<double>(t) + 0.5) / window) : 1.0;

  // Window j covers offsets [-T0/2, T0/2) around its centre, clipped to [0, T).
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const auto T = static_cast<std::ptrdiff_t>(samples);
  std::vector<double> overlap(samples, 0.0);
  d.start_.resize(d.n0_);
  d.length_.resize(d.n0_);
  for (std::size_t j = 0; j < d.n0_; ++j) {
    const auto c = static_cast<std::ptrdiff_t>(d.center(j));
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(c - half, 0);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(c + half, T);
    d.start_[j] = static_cast<std::size_t>(lo);
    d.length_[j] = static_cast<std::size_t>(hi - lo);
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
      const double k = d.base_[static_cast<std::size_t>(t - c + half)];
      overlap[static_cast<std::size_t>(t)] += k * k;
    }
  }
  for (std::size_t t = 0; t < samples; ++t)
    if (!(overlap[t] > 0.0)) throw ConfigError("stft: window family does not cover every sample");

  const std::size_t nf = d.n_freqs();
  d.re_.assign(nf * d.n0_ * window, 0.0);
  d.im_.assign(nf * d.n0_ * window, 0.0);
  for (std::size_t h = 0; h < nf; ++h) {
    const double weight = std::sqrt((h == 0 || 2 * h == window ? 1.0 : 2.0) / static_cast<double>(window));
    const double omega = 2.0 * pi * static_cast<double>(h) / static_cast<double>(window);
    for (std::size_t j = 0; j < d.n0_; ++j) {
      const auto c = static_cast<std::ptrdiff_t>(d.center(j));
      const std::size_t r = d.row(h, j);
      for (std::size_t u = 0; u < d.length_[j]; ++u) {
        const std::size_t t = d.start_[j] + u;
        const auto offset = static_cast<std::ptrdiff_t>(t) - c;
        const double tap = d.base_[static_cast<std::size_t>(offset + half)] / std::sqrt(overlap[t]);
        const double phase = omega * static_cast<double>(offset);
        if (h == 0) {
          d.re_[r * window + u] = weight * tap;
        } else if (2 * h == window) {
          // cos(pi * offset) exactly; sin(pi * integer) would leave rounding noise.
          d.re_[r * window + u] = weight * tap * (offset % 2 == 0 ? 1.0 : -1.0);
        } else {
          d.re_[r * window + u] = weight * tap * std::cos(phase);
          d.im_[r * window + u] = weight * tap * std::sin(phase);
        }
      }
    }
  }
  d.block_.resize(d.n0_);
  d.block_t_.resize(d.n0_);
  for (std::size_t j = 0; j < d.n0_; ++j) {
    const std::size_t len = d.length_[j];
    auto& b = d.block_[j];
    auto& bt = d.block_t_[j];
    b.assign(len * 2 * nf, 0.0);
    bt.assign(2 * nf * len, 0.0);
    for (std::size_t h = 0; h < nf; ++h) {
      const std::size_t r = d.row(h, j);
      for (std::size_t u = 0; u < len; ++u) {
        b[u * 2 * nf + 2 * h] = d.re_[r * window + u];
        b[u * 2 * nf + 2 * h + 1] = -d.im_[r * window + u];
        bt[(2 * h) * len + u] = d.re_[r * window + u];
        bt[(2 * h + 1) * len + u] = -d.im_[r * window + u];
      }
    }
  }
  return d;
}

StftDictionary::Atom StftDictionary::atom(std::size_t r) const noexcept {
  const std::size_t j = shift_of(r);
  return {start_[j], length_[j], re_.data() + r * window_, im_.data() + r * window_};
}

void StftDictionary::synthesize(const cplx* coefs, std::size_t stride, double* series) const {
  std::fill(series, series + samples_, 0.0);
  const auto& k = kernels::active();
  const std::size_t rows = size();
  for (std::size_t r = 0; r < rows; ++r) {
    const cplx v = coefs[r * stride];
    if (v == cplx{}) continue;
    const Atom a = atom(r);
    if (v.real() != 0.0) k.axpy(v.real(), a.re, series + a.start, a.length);
    if (v.imag() != 0.0 && !real_row(r)) k.axpy(-v.imag(), a.im, series + a.start, a.length);
  }
}

void StftDictionary::analyze(const double* series, cplx* coefs, std::size_t stride) const {
  const auto& k = kernels::active();
  const std::size_t rows = size();
  for (std::size_t r = 0; r < rows; ++r) {
    const Atom a = atom(r);
    const double re = k.dot(series + a.start, a.re, a.length);
    const double im = real_row(r) ? 0.0 : -k.dot(series + a.start, a.im, a.length);
    coefs[r * stride] = cplx(re, im);
  }
}

void StftDictionary::synthesize_many(const cplx* coefs, std::size_t count, double* series) const {
  std::fill(series, series + count * samples_, 0.0);
  if (count == 0) return;
  const auto& k = kernels::active();
  const std::size_t nf = n_freqs();
  const std::size_t s = size();
  std::vector<double> gathered(count * 2 * nf);
  for (std::size_t j = 0; j < n0_; ++j) {
    bool any = false;
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t h = 0; h < nf; ++h) {
        const cplx v = coefs[a * s + row(h, j)];
        gathered[a * 2 * nf + 2 * h] = v.real();
        gathered[a * 2 * nf + 2 * h + 1] = v.imag();
        any = any || v != cplx{};
      }
    if (!any) continue;
    k.gemm_acc(gathered.data(), 2 * nf, block_t_[j].data(), length_[j], series + start_[j], samples_, count, 2 * nf,
               length_[j]);
  }
}

void StftDictionary::analyze_many(const double* series, std::size_t count, cplx* coefs) const {
  if (count == 0) return;
  const auto& k = kernels::active();
  const std::size_t nf = n_freqs();
  const std::size_t s = size();
  std::vector<double> block(count * 2 * nf);
  for (std::size_t j = 0; j < n0_; ++j) {
    std::fill(block.begin(), block.end(), 0.0);
    k.gemm_acc(series + start_[j], samples_, block_[j].data(), 2 * nf, block.data(), 2 * nf, count, length_[j], 2 * nf);
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t h = 0; h < nf; ++h) {
        const std::size_t r = row(h, j);
        coefs[a * s + r] = cplx(block[a * 2 * nf + 2 * h], real_row(r) ? 0.0 : block[a * 2 * nf + 2 * h + 1]);
      }
  }
}

std::vector<double> StftDictionary::synthesize(std::span<const cplx> coefs) const {
  if (coefs.size() != size()) throw DimensionError("synthesize: coefficient vector length mismatch");
  std::vector<double> out(samples_);
  synthesize(coefs.data(), 1, out.data());
  return out;
}

std::vector<cplx> StftDictionary::analyze(std::span<const double> series) const {
  if (series.size() != samples_) throw DimensionError("analyze: series length mismatch");
  std::vector<cplx> out(size());
  analyze(series.data(), out.data(), 1);
  return out;
}

double StftDictionary::imaginary_residual(std::span<const cplx> coefs) const {
  if (coefs.size() != size()) throw DimensionError("imaginary_residual: length mismatch");
  std::vector<double> im(samples_, 0.0);
  for (std::size_t r = 0; r < size(); ++r) {
    const Atom a = atom(r);
    for (std::size_t u = 0; u < a.length; ++u)
      im[a.start + u] += coefs[r].real() * a.im[u] + coefs[r].imag() * a.re[u];
  }
  double acc = 0.0;
  for (double v : im) acc += v * v;
  return std::sqrt(acc);
}

Eigen::MatrixXcd StftDictionary::dense() const {
  Eigen::MatrixXcd phi_h = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(size()),
                                                  static_cast<Eigen::Index>(samples_));
  for (std::size_t r = 0; r < size(); ++r) {
    const Atom a = atom(r);
    for (std::size_t u = 0; u < a.length; ++u)
      phi_h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a.start + u)) = cplx(a.re[u], a.im[u]);
  }
  return phi_h;
}

}  // namespace stftr

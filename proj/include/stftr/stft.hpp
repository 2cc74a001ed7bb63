#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "stftr/tensor.hpp"

namespace stftr {

enum class WindowKind {
  sine,         // K(t) = sin(pi (t + 1/2) / T0); K^2 is a Hann window
  rectangular,
};

WindowKind parse_window_kind(std::string_view name);
std::string_view window_kind_name(WindowKind kind);

// Short-time Fourier dictionary over series of T samples.
//
// Windows of T0 samples are centred at c_j = (j + 1) * tau0 - 1 for
// j = 0..n0-1 and truncated to [0, T). Taps are divided by
// sqrt(sum_j K(t - c_j)^2), which makes the squared taps sum to one at every
// sample, edges included. Frequencies are w_h = 2 pi h / T0 for h = 0..T0/2
// with phase referenced to the window centre, and each frequency carries the
// real-FFT weight c_h (1/T0 at h = 0 and h = T0/2, 2/T0 otherwise, square-rooted)
// so that analysis is an isometry R^T -> C^s and synthesis is its adjoint and
// left inverse:
//
//   analyze(u)[h n0 + j]  = c_h sum_t u(t) K_j(t) exp(-i w_h (t - c_j))
//   synthesize(V)(t)      = Re sum_{h,j} V[h n0 + j] c_h K_j(t) exp(+i w_h (t - c_j))
//
// Coefficients are ordered frequency-major: all n0 shifts of w_0, then w_1, ...
// Rows with h = 0 or h = T0/2 have real atoms; the imaginary part of those
// coefficients does not reach the synthesized signal.
class StftDictionary {
 public:
  struct Atom {
    std::size_t start;
    std::size_t length;
    const double* re;
    const double* im;
  };

  static StftDictionary build(std::size_t samples, std::size_t window, std::size_t step,
                              WindowKind kind = WindowKind::sine);

  std::size_t samples() const noexcept { return samples_; }
  std::size_t window_length() const noexcept { return window_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t n_windows() const noexcept { return n0_; }
  std::size_t n_freqs() const noexcept { return window_ / 2 + 1; }
  std::size_t size() const noexcept { return n_freqs() * n0_; }
  WindowKind kind() const noexcept { return kind_; }

  std::size_t row(std::size_t freq, std::size_t shift) const noexcept { return freq * n0_ + shift; }
  std::size_t freq_of(std::size_t row) const noexcept { return row / n0_; }
  std::size_t shift_of(std::size_t row) const noexcept { return row % n0_; }
  std::size_t center(std::size_t shift) const noexcept { return (shift + 1) * step_ - 1; }
  bool real_row(std::size_t row) const noexcept {
    const std::size_t h = freq_of(row);
    return h == 0 || 2 * h == window_;
  }

  // Un-normalized base window taps, length T0.
  const std::vector<double>& window() const noexcept { return base_; }
  Atom atom(std::size_t row) const noexcept;

  std::vector<double> synthesize(std::span<const cplx> coefs) const;
  std::vector<cplx> analyze(std::span<const double> series) const;

  // Strided forms used on tensor slices: coefficient r is coefs[r * stride].
  void synthesize(const cplx* coefs, std::size_t stride, double* series) const;
  void analyze(const double* series, cplx* coefs, std::size_t stride) const;

  // Batched forms over `count` series stored back to back (count x T) and
  // coefficient vectors stored back to back (count x size()). Work goes
  // through one small gemm per window position.
  void synthesize_many(const cplx* coefs, std::size_t count, double* series) const;
  void analyze_many(const double* series, std::size_t count, cplx* coefs) const;

  // Norm of Im(V^T Phi^H); zero only for coefficient vectors whose atoms
  // combine to a real signal.
  double imaginary_residual(std::span<const cplx> coefs) const;

  // Dense s x T complex matrix Phi^H (row r holds atom r).
  Eigen::MatrixXcd dense() const;

 private:
  std::size_t samples_ = 0, window_ = 0, step_ = 0, n0_ = 0;
  WindowKind kind_ = WindowKind::sine;
  std::vector<double> base_;
  std::vector<std::size_t> start_, length_;
  // Per row, T0-strided taps (only the first length_[shift] used).
  std::vector<double> re_, im_;
  // Per window: taps x (2 * n_freqs) analysis block, columns re_h, -im_h
  // interleaved, and its transpose for synthesis.
  std::vector<std::vector<double>> block_, block_t_;
};

}  // namespace stftr

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace stftr {

using cplx = std::complex<double>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Complex coefficient tensor Z of shape m x s x p (sources x STFT components x
// covariates). Entry (i, j, k) lives at flat index (i * s + j) * p + k, so the
// coefficients of one source point form a contiguous block of s * p entries.
// std::complex<double> is layout-compatible with double[2], which lets the
// real kernels run over interleaved real/imaginary pairs.
class CoefTensor {
 public:
  CoefTensor() = default;
  CoefTensor(std::size_t m, std::size_t s, std::size_t p) : m_(m), s_(s), p_(p), data_(m * s * p) {}

  std::size_t m() const noexcept { return m_; }
  std::size_t s() const noexcept { return s_; }
  std::size_t p() const noexcept { return p_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t row_size() const noexcept { return s_ * p_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * s_ + j) * p_ + k;
  }
  cplx& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept { return data_[index(i, j, k)]; }
  cplx operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[index(i, j, k)];
  }
  cplx& operator[](std::size_t flat) noexcept { return data_[flat]; }
  cplx operator[](std::size_t flat) const noexcept { return data_[flat]; }

  std::span<cplx> values() noexcept { return data_; }
  std::span<const cplx> values() const noexcept { return data_; }
  std::span<cplx> row(std::size_t i) noexcept { return {data_.data() + i * row_size(), row_size()}; }
  std::span<const cplx> row(std::size_t i) const noexcept {
    return {data_.data() + i * row_size(), row_size()};
  }

  // Interleaved (re, im) view.
  std::span<double> reals() noexcept { return {reinterpret_cast<double*>(data_.data()), 2 * data_.size()}; }
  std::span<const double> reals() const noexcept {
    return {reinterpret_cast<const double*>(data_.data()), 2 * data_.size()};
  }
  std::span<double> row_reals(std::size_t i) noexcept {
    return {reinterpret_cast<double*>(data_.data() + i * row_size()), 2 * row_size()};
  }
  std::span<const double> row_reals(std::size_t i) const noexcept {
    return {reinterpret_cast<const double*>(data_.data() + i * row_size()), 2 * row_size()};
  }

  bool same_shape(const CoefTensor& o) const noexcept { return m_ == o.m_ && s_ == o.s_ && p_ == o.p_; }

  void set_zero() noexcept;
  double norm() const;
  double squared_norm() const;
  bool row_is_zero(std::size_t i) const noexcept;
  // Source rows holding at least one nonzero coefficient, ascending.
  std::vector<std::size_t> nonzero_rows() const;
  // Flat indices of nonzero entries, ascending.
  std::vector<std::size_t> support() const;
  std::size_t count_nonzero() const;

 private:
  std::size_t m_ = 0, s_ = 0, p_ = 0;
  std::vector<cplx> data_;
};

// Euclidean distance treating complex entries as real pairs.
double distance(const CoefTensor& a, const CoefTensor& b);
// Real inner product Re <a, b>.
double inner(const CoefTensor& a, const CoefTensor& b);

}  // namespace stftr

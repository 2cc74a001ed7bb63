#include "stftr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"

namespace stftr {

void CoefTensor::set_zero() noexcept { std::fill(data_.begin(), data_.end(), cplx{}); }

double CoefTensor::squared_norm() const { return kernels::sum_sq(reals()); }

double CoefTensor::norm() const { return std::sqrt(squared_norm()); }

bool CoefTensor::row_is_zero(std::size_t i) const noexcept {
  const auto r = row(i);
  return std::all_of(r.begin(), r.end(), [](cplx v) { return v == cplx{}; });
}

std::vector<std::size_t> CoefTensor::nonzero_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m_; ++i)
    if (!row_is_zero(i)) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> CoefTensor::support() const {
  std::vector<std::size_t> idx;
  for (std::size_t f = 0; f < data_.size(); ++f)
    if (data_[f] != cplx{}) idx.push_back(f);
  return idx;
}

std::size_t CoefTensor::count_nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](cplx v) { return v != cplx{}; }));
}

double distance(const CoefTensor& a, const CoefTensor& b) {
  if (!a.same_shape(b)) throw DimensionError("distance: tensor shapes differ");
  const auto x = a.reals();
  const auto y = b.reals();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double inner(const CoefTensor& a, const CoefTensor& b) {
  if (!a.same_shape(b)) throw DimensionError("inner: tensor shapes differ");
  return kernels::dot(a.reals(), b.reals());
}

}  // namespace stftr

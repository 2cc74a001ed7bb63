#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stftr/errors.hpp"

namespace stftr {

template <typename Estimable>
void summarize_replicates(InferenceResult& result, const std::vector<CoefTensor>& replicates,
                          Estimable estimable) {
  if (replicates.size() < 2) throw ConfigError("bootstrap: at least two replicates required");
  const CoefTensor& est = result.estimate;
  const std::size_t B = replicates.size();
  result.se = CoefTensor(est.m(), est.s(), est.p());
  result.t_stat = CoefTensor(est.m(), est.s(), est.p());
  result.degenerate.clear();
  // Standard errors at round-off level relative to the estimate count as zero.
  double scale = 0.0;
  for (std::size_t f = 0; f < est.size(); ++f)
    scale = std::max({scale, std::abs(est[f].real()), std::abs(est[f].imag())});
  const double floor = 1e-9 * scale;
  std::vector<bool> on_support(est.size(), false);
  for (std::size_t f : result.support) on_support[f] = true;
  for (std::size_t f = 0; f < est.size(); ++f) {
    double mean[2] = {0.0, 0.0};
    for (const auto& rep : replicates) {
      mean[0] += rep[f].real();
      mean[1] += rep[f].imag();
    }
    mean[0] /= static_cast<double>(B);
    mean[1] /= static_cast<double>(B);
    double var[2] = {0.0, 0.0};
    for (const auto& rep : replicates) {
      const double d0 = rep[f].real() - mean[0];
      const double d1 = rep[f].imag() - mean[1];
      var[0] += d0 * d0;
      var[1] += d1 * d1;
    }
    double se0 = std::sqrt(var[0] / static_cast<double>(B - 1));
    double se1 = std::sqrt(var[1] / static_cast<double>(B - 1));
    if (se0 <= floor) se0 = 0.0;
    if (se1 <= floor) se1 = 0.0;
    result.se[f] = cplx(se0, se1);
    result.t_stat[f] = cplx(se0 > 0.0 ? est[f].real() / se0 : 0.0, se1 > 0.0 ? est[f].imag() / se1 : 0.0);
    if (on_support[f] && ((estimable(f, 0) && se0 == 0.0) || (estimable(f, 1) && se1 == 0.0)))
      result.degenerate.push_back(f);
  }
}

}  // namespace stftr

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

// Per source point i: synthesize(sum_k X(r, k) Z_{i.k}), as an m x T matrix.
RowMatrix reconstruct_sources(const CoefTensor& z, const RowMatrix& X, const StftDictionary& dict, std::size_t r);

// Every trial of X.
std::vector<RowMatrix> reconstruct_all(const CoefTensor& z, const RowMatrix& X, const StftDictionary& dict);

// Mean over scope x T x q of (|est| - |truth|)^2.
double rectified_mse(const std::vector<RowMatrix>& estimated, const std::vector<RowMatrix>& truth,
                     std::span<const std::size_t> scope);

// stftr_mse / mner_mse.
double mse_ratio(double stftr_mse, double mner_mse);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample SD / sqrt(count); 0 for a single value
  std::size_t count = 0;
};
MeanSe mean_and_se(std::span<const double> values);

}  // namespace stftr

#include "stftr/metrics.hpp"

#include <cmath>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"

namespace stftr {

RowMatrix reconstruct_sources(const CoefTensor& z, const RowMatrix& X, const StftDictionary& dict, std::size_t r) {
  if (static_cast<std::size_t>(X.cols()) != z.p()) throw DimensionError("reconstruct_sources: design width differs from p");
  if (r >= static_cast<std::size_t>(X.rows())) throw DimensionError("reconstruct_sources: trial index out of range");
  if (z.s() != dict.size()) throw DimensionError("reconstruct_sources: dictionary size differs from s");
  std::vector<double> xr(z.p());
  for (std::size_t k = 0; k < z.p(); ++k) xr[k] = X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
  return source_series(z, xr, dict);
}

std::vector<RowMatrix> reconstruct_all(const CoefTensor& z, const RowMatrix& X, const StftDictionary& dict) {
  std::vector<RowMatrix> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (std::size_t r = 0; r < static_cast<std::size_t>(X.rows()); ++r) out.push_back(reconstruct_sources(z, X, dict, r));
  return out;
}

double rectified_mse(const std::vector<RowMatrix>& estimated, const std::vector<RowMatrix>& truth,
                     std::span<const std::size_t> scope) {
  if (scope.empty()) throw ConfigError("rectified_mse: empty scope");
  if (estimated.size() != truth.size()) throw DimensionError("rectified_mse: trial counts differ");
  if (truth.empty()) throw DimensionError("rectified_mse: no trials");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const RowMatrix& e = estimated[r];
    const RowMatrix& t = truth[r];
    if (e.rows() != t.rows() || e.cols() != t.cols())
      throw DimensionError("rectified_mse: shape mismatch in trial " + std::to_string(r));
    for (std::size_t i : scope) {
      if (i >= static_cast<std::size_t>(t.rows())) throw DimensionError("rectified_mse: scope index out of range");
      const auto row = static_cast<Eigen::Index>(i);
      acc += (e.row(row).cwiseAbs() - t.row(row).cwiseAbs()).squaredNorm();
      count += static_cast<std::size_t>(t.cols());
    }
  }
  return acc / static_cast<double>(count);
}

double mse_ratio(double stftr_mse, double mner_mse) {
  if (!(mner_mse > 0.0)) throw NumericalError("mse_ratio: zero denominator");
  return stftr_mse / mner_mse;
}

MeanSe mean_and_se(std::span<const double> values) {
  MeanSe out;
  out.count = values.size();
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - out.mean) * (v - out.mean);
    var /= static_cast<double>(values.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

}  // namespace stftr

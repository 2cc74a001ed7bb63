#pragma once

// Figure-style outputs: avg |T| tables (frequency rows in Hz, window-centre
// columns in ms), SVG heatmaps carrying every cell value as data attributes,
// and the method-comparison CSV.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stftr/stft.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

std::vector<double> frequency_axis_hz(const StftDictionary& dict, double sampling_rate);
std::vector<double> time_axis_ms(const StftDictionary& dict, double sampling_rate);

void write_avg_abs_t_csv(std::ostream& os, const RowMatrix& avg_abs_t, const StftDictionary& dict,
                         double sampling_rate);

// Linear colour scale from 0 (white) to `vmax` (dark red); vmax <= 0 uses the
// matrix maximum.
std::string svg_heatmap(const RowMatrix& values, const StftDictionary& dict, double sampling_rate,
                        const std::string& title, double vmax = 0.0);

struct ComparisonRow {
  std::uint64_t seed = 0;
  double noise_level = 0.0;
  double snr = 0.0;
  std::string scope;
  double mse_stftr = 0.0, mse_mner = 0.0, ratio = 0.0;
};

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);

}  // namespace stftr

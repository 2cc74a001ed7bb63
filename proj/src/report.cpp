#include "stftr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "stftr/errors.hpp"

namespace stftr {

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_shape(const RowMatrix& values, const StftDictionary& dict) {
  if (static_cast<std::size_t>(values.rows()) != dict.n_freqs() ||
      static_cast<std::size_t>(values.cols()) != dict.n_windows())
    throw DimensionError("report: matrix is " + std::to_string(values.rows()) + "x" + std::to_string(values.cols()) +
                         ", expected " + std::to_string(dict.n_freqs()) + "x" + std::to_string(dict.n_windows()));
}

}  // namespace

std::vector<double> frequency_axis_hz(const StftDictionary& dict, double sampling_rate) {
  std::vector<double> out(dict.n_freqs());
  for (std::size_t h = 0; h < out.size(); ++h)
    out[h] = static_cast<double>(h) * sampling_rate / static_cast<double>(dict.window_length());
  return out;
}

std::vector<double> time_axis_ms(const StftDictionary& dict, double sampling_rate) {
  std::vector<double> out(dict.n_windows());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = 1000.0 * static_cast<double>(dict.center(j)) / sampling_rate;
  return out;
}

void write_avg_abs_t_csv(std::ostream& os, const RowMatrix& avg_abs_t, const StftDictionary& dict,
                         double sampling_rate) {
  check_shape(avg_abs_t, dict);
  const auto freqs = frequency_axis_hz(dict, sampling_rate);
  const auto times = time_axis_ms(dict, sampling_rate);
  os << "freq_hz";
  for (double t : times) os << "," << fmt(t, "%g");
  os << "\n";
  for (std::size_t h = 0; h < freqs.size(); ++h) {
    os << fmt(freqs[h], "%g");
    for (std::size_t j = 0; j < times.size(); ++j)
      os << "," << fmt(avg_abs_t(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(j)));
    os << "\n";
  }
}

std::string svg_heatmap(const RowMatrix& values, const StftDictionary& dict, double sampling_rate,
                        const std::string& title, double vmax) {
  check_shape(values, dict);
  const auto freqs = frequency_axis_hz(dict, sampling_rate);
  const auto times = time_axis_ms(dict, sampling_rate);
  if (!(vmax > 0.0)) vmax = values.size() > 0 ? values.maxCoeff() : 0.0;
  const int cell_w = 20, cell_h = 20, left = 70, top = 40, bottom = 60, right = 90;
  const int nf = static_cast<int>(freqs.size());
  const int nw = static_cast<int>(times.size());
  const int width = left + nw * cell_w + right;
  const int height = top + nf * cell_h + bottom;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" data-rows=\"" << nf << "\" data-cols=\"" << nw << "\" data-vmin=\"0\" data-vmax=\"" << fmt(vmax)
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "  <title>" << escape_xml(title) << "</title>\n";
  s << "  <text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << escape_xml(title) << "</text>\n";
  s << "  <g class=\"cells\">\n";
  for (int h = 0; h < nf; ++h) {
    // Lowest frequency at the bottom.
    const int y = top + (nf - 1 - h) * cell_h;
    for (int j = 0; j < nw; ++j) {
      const double v = values(h, j);
      const double u = vmax > 0.0 ? std::clamp(v / vmax, 0.0, 1.0) : 0.0;
      const int r = 255 - static_cast<int>(std::lround(u * 115.0));
      const int gb = 255 - static_cast<int>(std::lround(u * 255.0));
      s << "    <rect x=\"" << left + j * cell_w << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\""
        << cell_h << "\" fill=\"rgb(" << r << "," << gb << "," << gb << ")\" data-row=\"" << h << "\" data-col=\""
        << j << "\" data-freq-hz=\"" << fmt(freqs[static_cast<std::size_t>(h)], "%g") << "\" data-time-ms=\""
        << fmt(times[static_cast<std::size_t>(j)], "%g") << "\" data-value=\"" << fmt(v) << "\"/>\n";
    }
  }
  s << "  </g>\n";
  s << "  <g class=\"axis-y\">\n";
  for (int h = 0; h < nf; ++h)
    s << "    <text x=\"" << left - 6 << "\" y=\"" << top + (nf - 1 - h) * cell_h + cell_h / 2 + 4
      << "\" text-anchor=\"end\">" << fmt(freqs[static_cast<std::size_t>(h)], "%g") << "</text>\n";
  s << "    <text x=\"14\" y=\"" << top + nf * cell_h / 2 << "\" transform=\"rotate(-90 14 " << top + nf * cell_h / 2
    << ")\" text-anchor=\"middle\">frequency (Hz)</text>\n";
  s << "  </g>\n";
  s << "  <g class=\"axis-x\">\n";
  for (int j = 0; j < nw; j += std::max(1, nw / 8))
    s << "    <text x=\"" << left + j * cell_w + cell_w / 2 << "\" y=\"" << top + nf * cell_h + 14
      << "\" text-anchor=\"middle\">" << fmt(times[static_cast<std::size_t>(j)], "%g") << "</text>\n";
  s << "    <text x=\"" << left + nw * cell_w / 2 << "\" y=\"" << top + nf * cell_h + 40
    << "\" text-anchor=\"middle\">time (ms)</text>\n";
  s << "  </g>\n";
  const int bar_x = left + nw * cell_w + 20;
  s << "  <defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
       "<stop offset=\"0\" stop-color=\"rgb(255,255,255)\"/><stop offset=\"1\" stop-color=\"rgb(140,0,0)\"/>"
       "</linearGradient></defs>\n";
  s << "  <g class=\"colorbar\">\n    <rect x=\"" << bar_x << "\" y=\"" << top << "\" width=\"12\" height=\""
    << nf * cell_h << "\" fill=\"url(#scale)\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
  s << "    <text x=\"" << bar_x + 16 << "\" y=\"" << top + 8 << "\">" << fmt(vmax, "%.3g") << "</text>\n";
  s << "    <text x=\"" << bar_x + 16 << "\" y=\"" << top + nf * cell_h << "\">0</text>\n  </g>\n";
  s << "</svg>\n";
  return s.str();
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << "seed,noise_level,snr,scope,mse_stftr,mse_mner,ratio\n";
  for (const auto& r : rows)
    os << r.seed << "," << fmt(r.noise_level, "%g") << "," << fmt(r.snr, "%g") << "," << r.scope << ","
       << fmt(r.mse_stftr) << "," << fmt(r.mse_mner) << "," << fmt(r.ratio) << "\n";
}

}  // namespace stftr

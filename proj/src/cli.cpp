#include "stftr/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include "stftr/config_json.hpp"
#include "stftr/errors.hpp"
#include "stftr/io.hpp"
#include "stftr/metrics.hpp"
#include "stftr/parallel.hpp"
#include "stftr/pipeline.hpp"
#include "stftr/report.hpp"

namespace stftr {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const char* config_help) {
  cmd->add_option("--config", c.config, config_help);
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--threads", c.threads, "Worker cap (default: STFTR_THREADS, else all cores)");
  cmd->add_option("--out", c.out, "Output directory")->required();
}

RunConfig run_config(const Common& c) {
  RunConfig config = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) config.bootstrap.seed = *c.seed;
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("", "cannot write " + path.string());
}

// The ROI list for a fit: the configured ROI file, else the one stored next
// to the dataset.
std::vector<NamedRoi> resolve_rois(const RunConfig& config, const std::string& config_path, const fs::path& data_dir) {
  if (!config.penalty.roi_file.empty()) {
    fs::path p = config.penalty.roi_file;
    if (p.is_relative() && !fs::exists(p) && !config_path.empty()) {
      const fs::path alt = fs::path(config_path).parent_path() / p;
      if (fs::exists(alt)) p = alt;
    }
    return load_rois(p);
  }
  if (fs::exists(data_dir / "rois.json")) return load_rois(data_dir / "rois.json");
  return {};
}

std::vector<NamedRoi> fit_rois(const fs::path& fit_dir) {
  return fs::exists(fit_dir / "rois.json") ? load_rois(fit_dir / "rois.json") : std::vector<NamedRoi>{};
}

StftDictionary dictionary_for(const RunConfig& config, const TrialDataset& data) {
  return config.dictionary(data.T(), data.sampling_rate);
}

void check_geometry(const StoredFit& fit, const StftDictionary& dict, const fs::path& dir) {
  if (fit.window != dict.window_length() || fit.step != dict.step())
    throw ConfigError("fit in " + dir.string() + " used STFT window/step " + std::to_string(fit.window) + "/" +
                      std::to_string(fit.step) + " samples, the configuration gives " +
                      std::to_string(dict.window_length()) + "/" + std::to_string(dict.step()));
}

void check_split(const StoredFit& fit, const DataSplit& split, const fs::path& dir) {
  const auto& s = fit.meta.at("split");
  if (s.at("second_trials").get<std::vector<std::size_t>>() != split.second_trials)
    throw ConfigError("fit in " + dir.string() + " used a different trial split than the configuration");
}

std::size_t slope_covariate(const CoefTensor& z) { return z.p() > 1 ? 1 : 0; }

std::string file_stem(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out.empty() ? "roi" : out;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::optional<double> noise_level, snr;
  bool snr_db = false;
};

int cmd_simulate(const SimulateArgs& a) {
  SimulationSpec spec = a.common.config.empty() ? SimulationSpec::desk_default(0)
                                                : load_simulation_spec(a.common.config);
  if (a.common.seed) spec.seed = *a.common.seed;
  if (a.noise_level) spec.noise_level = *a.noise_level;
  if (a.snr) spec.snr = *a.snr;
  if (a.snr_db) spec.snr_db = true;
  spec.validate();
  const auto [data, truth] = generate_dataset(spec);
  const fs::path out = a.common.out;
  const Json spec_json = to_json(spec);
  write_dataset(out, data, &truth, spec_json);
  save_json(out / "spec.json", spec_json);
  save_json(out / "rois.json", rois_to_json(simulation_rois(spec)));
  std::cerr << "simulate: wrote " << data.q() << " trials (" << data.n() << " sensors x " << data.T()
            << " samples, " << data.m() << " sources) to " << out.string() << "\n";
  return kExitOk;
}

// ---- fit --------------------------------------------------------------------

struct FitArgs {
  Common common;
  std::string data;
  std::string method;
};

int cmd_fit(const FitArgs& a) {
  RunConfig config = run_config(a.common);
  if (!a.method.empty()) config.method = parse_method(a.method);
  const std::size_t threads = resolve_threads(a.common.threads);
  const StoredDataset stored = read_dataset(a.data);
  const TrialDataset data = fitting_data(stored);
  const auto dict = dictionary_for(config, data);
  const fs::path out = a.common.out;
  fs::create_directories(out);

  if (config.method == Method::mne_r) {
    const MnerFit fit = fit_mner(data, dict, config, threads);
    write_fit(out, fit, dict);
    save_json(out / "config.json", to_json(config));
    save_json(out / "rois.json", rois_to_json(resolve_rois(config, a.common.config, a.data)));
    std::cerr << "fit: mne-r with lambda " << fit.lambda << "\n";
    return kExitOk;
  }

  const auto rois = resolve_rois(config, a.common.config, a.data);
  const StftrFit fit = fit_stftr(data, dict, rois, config, threads);
  write_fit(out, fit, dict);
  save_json(out / "config.json", to_json(config));
  save_json(out / "rois.json", rois_to_json(rois));
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << "fit: stft-r alpha " << fit.alpha << " beta " << fit.beta << " gamma " << fit.gamma << " lambda2 "
            << fit.lambda2 << ", " << fit.support.size() << " nonzero coefficients\n";
  if (!fit.solve.converged) {
    std::cerr << "error: active-set solver did not reach the KKT tolerance; artifacts written to " << out.string()
              << "\n";
    return kExitError;
  }
  return fit.warnings.empty() ? kExitOk : kExitWarnings;
}

// ---- bootstrap --------------------------------------------------------------

struct BootstrapArgs {
  Common common;
  std::string data, fit;
  std::optional<std::size_t> B;
};

InferenceResult bootstrap_stored(const StoredFit& stored_fit, const TrialDataset& data, const StftDictionary& dict,
                                 const RunConfig& config, std::size_t threads, const fs::path& fit_dir) {
  check_geometry(stored_fit, dict, fit_dir);
  const DataSplit split = make_split(data, config.split_halves);
  check_split(stored_fit, split, fit_dir);
  if (stored_fit.method == "mne-r") {
    MnerFit fit;
    fit.split = split;
    fit.lambda = stored_fit.meta.at("lambda").get<double>();
    fit.regression = mne_fit(fit.split.second, dict, fit.lambda);
    return bootstrap_mner(fit, dict, config, threads);
  }
  if (stored_fit.method != "stft-r") throw IoError("", "unknown method in fit " + fit_dir.string());
  StftrFit fit;
  fit.split = split;
  fit.z = stored_fit.z;
  fit.support = stored_fit.support;
  return bootstrap_stftr(fit, dict, config, threads);
}

int cmd_bootstrap(const BootstrapArgs& a) {
  RunConfig config = run_config(a.common);
  if (a.B) config.bootstrap.B = *a.B;
  config.validate();
  const std::size_t threads = resolve_threads(a.common.threads);
  const StoredDataset stored = read_dataset(a.data);
  const TrialDataset data = fitting_data(stored);
  const auto dict = dictionary_for(config, data);
  const StoredFit stored_fit = read_fit(a.fit);
  const InferenceResult result = bootstrap_stored(stored_fit, data, dict, config, threads, a.fit);

  const fs::path out = a.common.out;
  write_inference(out, result);
  const auto rois = fit_rois(a.fit);
  for (const auto& roi : rois) {
    const RowMatrix avg = averaged_absolute_t(result, dict, roi.sources, slope_covariate(result.estimate));
    std::ofstream csv(out / ("avg_abs_t_" + file_stem(roi.name) + ".csv"), std::ios::trunc);
    write_avg_abs_t_csv(csv, avg, dict, data.sampling_rate);
    if (!csv) throw IoError("", "cannot write avg_abs_t table for ROI " + roi.name);
  }
  std::cerr << "bootstrap: " << result.method << ", B = " << result.B << ", " << result.support.size()
            << " coefficients, " << rois.size() << " ROI tables\n";
  if (result.degenerate_se()) {
    std::cerr << "warning: " << result.degenerate.size() << " coefficients have zero bootstrap spread\n";
    return kExitWarnings;
  }
  return kExitOk;
}

// ---- compare ----------------------------------------------------------------

struct CompareArgs {
  Common common;
  std::string data, stftr_fit, mner_fit, stftr_boot, mner_boot;
};

int cmd_compare(const CompareArgs& a) {
  const RunConfig config = run_config(a.common);
  const std::size_t threads = resolve_threads(a.common.threads);
  const StoredDataset stored = read_dataset(a.data);
  if (stored.noiseless_sources.empty())
    throw IoError("S_true", "compare needs simulated ground truth in " + a.data);
  const TrialDataset data = fitting_data(stored);
  const auto dict = dictionary_for(config, data);
  const StoredFit sf = read_fit(a.stftr_fit);
  const StoredFit mf = read_fit(a.mner_fit);
  if (!sf.z.same_shape(mf.z))
    throw DimensionError("compare: fits have shapes " + std::to_string(sf.z.m()) + "x" + std::to_string(sf.z.s()) +
                         "x" + std::to_string(sf.z.p()) + " and " + std::to_string(mf.z.m()) + "x" +
                         std::to_string(mf.z.s()) + "x" + std::to_string(mf.z.p()));
  check_geometry(sf, dict, a.stftr_fit);
  check_geometry(mf, dict, a.mner_fit);
  const DataSplit split = make_split(data, config.split_halves);
  check_split(sf, split, a.stftr_fit);
  check_split(mf, split, a.mner_fit);

  std::vector<RowMatrix> truth;
  for (std::size_t r : split.second_trials) truth.push_back(stored.noiseless_sources[r]);
  const auto est_s = reconstruct_all(sf.z, split.second.X, dict);
  const auto est_m = reconstruct_all(mf.z, split.second.X, dict);

  auto rois = fit_rois(a.stftr_fit);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> scopes;
  std::vector<std::size_t> roi_union;
  for (const auto& roi : rois) roi_union.insert(roi_union.end(), roi.sources.begin(), roi.sources.end());
  std::sort(roi_union.begin(), roi_union.end());
  if (!roi_union.empty()) scopes.emplace_back("roi", roi_union);
  std::vector<std::size_t> all(data.m());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  scopes.emplace_back("all", all);
  for (const auto& roi : rois) scopes.emplace_back("roi:" + roi.name, roi.sources);

  const std::uint64_t seed = stored.spec.is_object() ? stored.spec.value("seed", std::uint64_t{0}) : 0;
  const double noise = stored.spec.is_object() ? stored.spec.value("noise_level", 0.0) : 0.0;
  double snr = std::numeric_limits<double>::infinity();
  if (stored.spec.is_object() && stored.spec.contains("snr") && stored.spec["snr"].is_number())
    snr = stored.spec["snr"].get<double>();
  std::vector<ComparisonRow> rows;
  for (const auto& [name, scope] : scopes) {
    ComparisonRow row{seed, noise, snr, name, rectified_mse(est_s, truth, scope), rectified_mse(est_m, truth, scope), 0.0};
    row.ratio = mse_ratio(row.mse_stftr, row.mse_mner);
    rows.push_back(row);
  }
  const fs::path out = a.common.out;
  fs::create_directories(out);
  {
    std::ofstream csv(out / "compare.csv", std::ios::trunc);
    write_comparison_csv(csv, rows);
    if (!csv) throw IoError("", "cannot write compare.csv");
  }

  // avg |T| heatmaps: from stored bootstrap results when given, otherwise
  // computed here with the configured B and seed.
  bool degenerate = false;
  auto inference = [&](const StoredFit& fit, const std::string& boot_dir, const std::string& fit_dir) {
    InferenceResult r = boot_dir.empty() ? bootstrap_stored(fit, data, dict, config, threads, fit_dir)
                                         : read_inference(boot_dir);
    if (!r.estimate.same_shape(fit.z)) throw DimensionError("compare: bootstrap result shape differs from its fit");
    degenerate = degenerate || r.degenerate_se();
    return r;
  };
  if (!rois.empty()) {
    const InferenceResult bs = inference(sf, a.stftr_boot, a.stftr_fit);
    const InferenceResult bm = inference(mf, a.mner_boot, a.mner_fit);
    for (const auto& roi : rois) {
      const RowMatrix ts = averaged_absolute_t(bs, dict, roi.sources, slope_covariate(sf.z));
      const RowMatrix tm = averaged_absolute_t(bm, dict, roi.sources, slope_covariate(mf.z));
      const double vmax = std::max(ts.maxCoeff(), tm.maxCoeff());
      const std::string stem = file_stem(roi.name);
      write_text(out / ("avg_abs_t_stft-r_" + stem + ".svg"),
                 svg_heatmap(ts, dict, data.sampling_rate, "STFT-R avg |T|, " + roi.name, vmax));
      write_text(out / ("avg_abs_t_mne-r_" + stem + ".svg"),
                 svg_heatmap(tm, dict, data.sampling_rate, "MNE-R avg |T|, " + roi.name, vmax));
    }
  }
  for (const auto& r : rows) std::cerr << "compare: " << r.scope << " ratio " << r.ratio << "\n";
  return degenerate ? kExitWarnings : kExitOk;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  Common common;
  std::string spec;
  std::size_t seeds = 5;
  std::vector<double> noise_levels{0.1, 0.3, 0.5};
  std::vector<double> snrs{0.5, 1.0};
};

int cmd_report(const ReportArgs& a) {
  const RunConfig config = run_config(a.common);
  const std::size_t threads = resolve_threads(a.common.threads);
  const SimulationSpec base = a.spec.empty() ? SimulationSpec::desk_default(0) : load_simulation_spec(a.spec);
  const std::uint64_t first_seed = a.common.seed.value_or(base.seed);
  const fs::path out = a.common.out;
  fs::create_directories(out);

  std::vector<ComparisonRow> rows;
  std::ofstream runs(out / "runs.csv", std::ios::trunc);
  runs << "seed,noise_level,snr,ratio_roi,ratio_all,low_freq_stftr,low_freq_mner,support_rows,converged,"
          "degenerate_se\n";
  std::ofstream summary(out / "summary.csv", std::ios::trunc);
  summary << "noise_level,snr,scope,runs,mean_ratio,se_ratio\n";
  bool warnings = false;
  for (double snr : a.snrs)
    for (double noise : a.noise_levels) {
      std::vector<double> roi_ratios, all_ratios;
      for (std::size_t k = 0; k < a.seeds; ++k) {
        SimulationSpec spec = base;
        spec.seed = first_seed + k;
        spec.noise_level = noise;
        spec.snr = snr;
        const StudyRun run = run_study(spec, config, threads);
        rows.push_back({spec.seed, noise, snr, "roi", run.mse_stftr_roi, run.mse_mner_roi, run.ratio_roi});
        rows.push_back({spec.seed, noise, snr, "all", run.mse_stftr_all, run.mse_mner_all, run.ratio_all});
        roi_ratios.push_back(run.ratio_roi);
        all_ratios.push_back(run.ratio_all);
        warnings = warnings || !run.stftr_converged || run.degenerate_se;
        runs << spec.seed << "," << noise << "," << snr << "," << run.ratio_roi << "," << run.ratio_all << ","
             << run.low_freq_stftr << "," << run.low_freq_mner << "," << run.support_rows << ","
             << run.stftr_converged << "," << run.degenerate_se << "\n";
        std::cerr << "report: snr " << snr << " noise " << noise << " seed " << spec.seed << " roi ratio "
                  << run.ratio_roi << "\n";
      }
      const auto r = mean_and_se(roi_ratios);
      const auto c = mean_and_se(all_ratios);
      summary << noise << "," << snr << ",roi," << r.count << "," << r.mean << "," << r.se << "\n";
      summary << noise << "," << snr << ",all," << c.count << "," << c.mean << "," << c.se << "\n";
    }
  std::ofstream csv(out / "compare.csv", std::ios::trunc);
  write_comparison_csv(csv, rows);
  if (!csv || !runs || !summary) throw IoError("", "cannot write report tables in " + out.string());
  return warnings ? kExitWarnings : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Time-frequency regression of trial-wise source activity on covariates"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a simulated dataset with ground truth");
  add_common(c_sim, sim.common, "Simulation spec JSON (default: desk-scale spec)");
  c_sim->add_option("--noise-level", sim.noise_level, "Source-noise SD relative to the peak signal");
  c_sim->add_option("--snr", sim.snr, "Sensor signal-to-noise power ratio");
  c_sim->add_flag("--snr-db", sim.snr_db, "Interpret --snr in decibels");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit STFT-R or MNE-R to a dataset");
  add_common(c_fit, fit.common, "Run configuration JSON");
  c_fit->add_option("--data", fit.data, "Dataset directory")->required();
  c_fit->add_option("--method", fit.method, "stft-r or mne-r (overrides the configuration)");

  BootstrapArgs boot;
  auto* c_boot = app.add_subcommand("bootstrap", "Residual bootstrap standard errors and t statistics");
  add_common(c_boot, boot.common, "Run configuration JSON");
  c_boot->add_option("--data", boot.data, "Dataset directory")->required();
  c_boot->add_option("--fit", boot.fit, "Fit directory")->required();
  c_boot->add_option("-B", boot.B, "Bootstrap replicates (overrides the configuration)");

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "Rectified-MSE comparison and avg |T| heatmaps");
  add_common(c_cmp, cmp.common, "Run configuration JSON");
  c_cmp->add_option("--data", cmp.data, "Simulated dataset directory")->required();
  c_cmp->add_option("--stftr", cmp.stftr_fit, "STFT-R fit directory")->required();
  c_cmp->add_option("--mner", cmp.mner_fit, "MNE-R fit directory")->required();
  c_cmp->add_option("--stftr-boot", cmp.stftr_boot, "STFT-R bootstrap directory");
  c_cmp->add_option("--mner-boot", cmp.mner_boot, "MNE-R bootstrap directory");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Simulation study over seeds, noise levels and SNRs");
  add_common(c_rep, rep.common, "Run configuration JSON");
  c_rep->add_option("--spec", rep.spec, "Base simulation spec JSON");
  c_rep->add_option("--seeds", rep.seeds, "Seeds per setting")->check(CLI::PositiveNumber);
  c_rep->add_option("--noise-levels", rep.noise_levels, "Source noise levels")->delimiter(',');
  c_rep->add_option("--snrs", rep.snrs, "Sensor SNRs")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_fit->parsed()) return cmd_fit(fit);
    if (c_boot->parsed()) return cmd_bootstrap(boot);
    if (c_cmp->parsed()) return cmd_compare(cmp);
    if (c_rep->parsed()) return cmd_report(rep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace stftr

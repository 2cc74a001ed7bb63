#include "stftr/config_json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <type_traits>

#include "stftr/errors.hpp"

namespace stftr {

namespace {

std::string_view gamma_policy_name(GammaPolicy p) { return p == GammaPolicy::fixed_small ? "fixed-small" : "tuned"; }

std::string_view initial_active_name(InitialActive a) {
  switch (a) {
    case InitialActive::roi: return "roi";
    case InitialActive::empty: return "empty";
    case InitialActive::all: return "all";
  }
  return "roi";
}

// Reads the members of one JSON object, remembering which keys were used.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      const Json& v = j_.at(key);
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
        throw ConfigError("config key '" + key_path(key) + "' must be a nonnegative integer");
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("config key '" + key_path(key) + "' has the wrong type");
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const Json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      throw ConfigError("config key '" + key_path(key) + "' must be a number or null");
    }
  }

  template <class Parse>
  void get_enum(const char* key, Parse parse) {
    std::string name;
    get(key, name);
    if (j_.contains(key)) parse(name);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + key_path(key.c_str()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("", "cannot write " + path.string());
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Section top(j, "");
  if (top.has("model")) {
    Section s(top.child("model"), "model");
    s.get("window_ms", c.model.window_ms);
    s.get("step_ms", c.model.step_ms);
    s.get_enum("window", [&](const std::string& n) { c.model.window = parse_window_kind(n); });
    s.finish();
  }
  if (top.has("penalty")) {
    Section s(top.child("penalty"), "penalty");
    s.get_optional("alpha", c.penalty.alpha);
    s.get_optional("beta", c.penalty.beta);
    s.get_optional("gamma", c.penalty.gamma);
    s.get_enum("weight_policy", [&](const std::string& n) { c.penalty.weight_policy = parse_weight_policy(n); });
    s.get("roi_file", c.penalty.roi_file);
    s.finish();
  }
  if (top.has("solver")) {
    Section s(top.child("solver"), "solver");
    s.get("tol_z", c.solver.tol_z);
    s.get("max_fista_iter", c.solver.max_fista_iter);
    s.get("kkt_tol_rel", c.solver.kkt_tol_rel);
    s.get("kkt_tol_abs", c.solver.kkt_tol_abs);
    s.get("active_batch", c.solver.active_batch);
    s.get("max_outer_rounds", c.solver.max_outer_rounds);
    s.get("lipschitz_tol", c.solver.lipschitz_tol);
    s.get("lipschitz_max_iter", c.solver.lipschitz_max_iter);
    s.get("kkt_max_sweeps", c.solver.kkt_max_sweeps);
    s.get("kkt_cd_tol", c.solver.kkt_cd_tol);
    s.get("trace_every", c.solver.trace_every);
    s.get("adaptive_restart", c.solver.adaptive_restart);
    s.get_enum("initial_active", [&](const std::string& n) { c.initial_active = parse_initial_active(n); });
    s.finish();
  }
  if (top.has("cv")) {
    Section s(top.child("cv"), "cv");
    s.get("n_folds", c.cv.n_folds);
    s.get("alpha_grid", c.cv.alpha_grid);
    s.get("beta_grid", c.cv.beta_grid);
    s.get("gamma_grid", c.cv.gamma_grid);
    s.get("lambda2_grid", c.cv.lambda2_grid);
    s.get_enum("gamma_policy", [&](const std::string& n) { c.cv.gamma_policy = parse_gamma_policy(n); });
    s.get("gamma_fixed", c.cv.gamma_fixed);
    s.finish();
  }
  if (top.has("refit")) {
    Section s(top.child("refit"), "refit");
    s.get("cg_tol", c.refit.cg_tol);
    s.get("cg_max_iter", c.refit.cg_max_iter);
    s.finish();
  }
  if (top.has("bootstrap")) {
    Section s(top.child("bootstrap"), "bootstrap");
    s.get("B", c.bootstrap.B);
    s.get("seed", c.bootstrap.seed);
    s.finish();
  }
  if (top.has("mne")) {
    Section s(top.child("mne"), "mne");
    s.get("lambda_grid", c.mne.lambda_grid);
    s.get("n_folds", c.mne.n_folds);
    s.finish();
  }
  top.get_enum("method", [&](const std::string& n) { c.method = parse_method(n); });
  top.get("split_halves", c.split_halves);
  top.finish();
  c.refit.lambda2_grid = c.cv.lambda2_grid;
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["model"] = {{"window_ms", c.model.window_ms},
                {"step_ms", c.model.step_ms},
                {"window", window_kind_name(c.model.window)}};
  j["penalty"] = {{"alpha", optional_json(c.penalty.alpha)},
                  {"beta", optional_json(c.penalty.beta)},
                  {"gamma", optional_json(c.penalty.gamma)},
                  {"weight_policy", weight_policy_name(c.penalty.weight_policy)},
                  {"roi_file", c.penalty.roi_file}};
  j["solver"] = {{"tol_z", c.solver.tol_z},
                 {"max_fista_iter", c.solver.max_fista_iter},
                 {"kkt_tol_rel", c.solver.kkt_tol_rel},
                 {"kkt_tol_abs", c.solver.kkt_tol_abs},
                 {"active_batch", c.solver.active_batch},
                 {"max_outer_rounds", c.solver.max_outer_rounds},
                 {"lipschitz_tol", c.solver.lipschitz_tol},
                 {"lipschitz_max_iter", c.solver.lipschitz_max_iter},
                 {"kkt_max_sweeps", c.solver.kkt_max_sweeps},
                 {"kkt_cd_tol", c.solver.kkt_cd_tol},
                 {"trace_every", c.solver.trace_every},
                 {"adaptive_restart", c.solver.adaptive_restart},
                 {"initial_active", initial_active_name(c.initial_active)}};
  j["cv"] = {{"n_folds", c.cv.n_folds},
             {"alpha_grid", c.cv.alpha_grid},
             {"beta_grid", c.cv.beta_grid},
             {"gamma_grid", c.cv.gamma_grid},
             {"lambda2_grid", c.cv.lambda2_grid},
             {"gamma_policy", gamma_policy_name(c.cv.gamma_policy)},
             {"gamma_fixed", c.cv.gamma_fixed}};
  j["refit"] = {{"cg_tol", c.refit.cg_tol}, {"cg_max_iter", c.refit.cg_max_iter}};
  j["bootstrap"] = {{"B", c.bootstrap.B}, {"seed", c.bootstrap.seed}};
  j["mne"] = {{"lambda_grid", c.mne.lambda_grid}, {"n_folds", c.mne.n_folds}};
  j["method"] = method_name(c.method);
  j["split_halves"] = c.split_halves;
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(load_json(path)); }

SimulationSpec simulation_spec_from_json(const Json& j) {
  Section top(j, "");
  std::uint64_t seed = 0;
  top.get("seed", seed);
  SimulationSpec s = SimulationSpec::desk_default(seed);
  top.get("n", s.n);
  top.get("m", s.m);
  top.get("T", s.T);
  top.get("q", s.q);
  top.get("sampling_rate", s.sampling_rate);
  top.get("window", s.window);
  top.get("step", s.step);
  top.get("noise_level", s.noise_level);
  if (top.has("snr")) {
    const Json& v = top.child("snr");
    if (v.is_number()) {
      s.snr = v.get<double>();
    } else if (v.is_string() && v.get<std::string>() == "inf") {
      s.snr = std::numeric_limits<double>::infinity();
    } else {
      throw ConfigError("config key 'snr' must be a number or \"inf\"");
    }
  }
  top.get("snr_db", s.snr_db);
  top.get("gp_length_scale", s.gp_length_scale);
  top.get("iir_order", s.iir_order);
  if (top.has("curve")) {
    Section c(top.child("curve"), "curve");
    c.get("scale", s.curve.scale);
    c.get("midpoint", s.curve.midpoint);
    c.get("rate", s.curve.rate);
    c.finish();
  }
  if (top.has("regions")) {
    const Json& arr = top.child("regions");
    if (!arr.is_array()) throw ConfigError("config key 'regions' must be an array");
    s.regions.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section r(arr[i], "regions[" + std::to_string(i) + "]");
      RegionSpec region;
      r.get("name", region.name);
      r.get("sources", region.sources);
      r.get("target", region.target);
      if (r.has("gabor")) {
        Section g(r.child("gabor"), "regions[" + std::to_string(i) + "].gabor");
        g.get("center", region.gabor.center);
        g.get("width", region.gabor.width);
        g.get("carrier", region.gabor.carrier);
        g.get("amplitude", region.gabor.amplitude);
        g.finish();
      }
      r.finish();
      s.regions.push_back(std::move(region));
    }
  }
  top.finish();
  s.validate();
  return s;
}

Json to_json(const SimulationSpec& s) {
  Json j;
  j["seed"] = s.seed;
  j["n"] = s.n;
  j["m"] = s.m;
  j["T"] = s.T;
  j["q"] = s.q;
  j["sampling_rate"] = s.sampling_rate;
  j["window"] = s.window;
  j["step"] = s.step;
  j["noise_level"] = s.noise_level;
  j["snr"] = std::isinf(s.snr) ? Json("inf") : Json(s.snr);
  j["snr_db"] = s.snr_db;
  j["gp_length_scale"] = s.gp_length_scale;
  j["iir_order"] = s.iir_order;
  j["curve"] = {{"scale", s.curve.scale}, {"midpoint", s.curve.midpoint}, {"rate", s.curve.rate}};
  Json regions = Json::array();
  for (const auto& r : s.regions)
    regions.push_back({{"name", r.name},
                       {"sources", r.sources},
                       {"target", r.target},
                       {"gabor",
                        {{"center", r.gabor.center},
                         {"width", r.gabor.width},
                         {"carrier", r.gabor.carrier},
                         {"amplitude", r.gabor.amplitude}}}});
  j["regions"] = std::move(regions);
  return j;
}

SimulationSpec load_simulation_spec(const std::filesystem::path& path) {
  return simulation_spec_from_json(load_json(path));
}

std::vector<NamedRoi> rois_from_json(const Json& j) {
  Section top(j, "");
  std::vector<NamedRoi> out;
  if (!top.has("rois")) throw ConfigError("ROI file has no 'rois' array");
  const Json& arr = top.child("rois");
  if (!arr.is_array()) throw ConfigError("config key 'rois' must be an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Section r(arr[i], "rois[" + std::to_string(i) + "]");
    NamedRoi roi;
    r.get("name", roi.name);
    r.get("sources", roi.sources);
    r.finish();
    if (roi.name.empty()) roi.name = "roi-" + std::to_string(i);
    if (roi.sources.empty()) throw ConfigError("ROI '" + roi.name + "' has no sources");
    out.push_back(std::move(roi));
  }
  top.finish();
  return out;
}

Json rois_to_json(const std::vector<NamedRoi>& rois) {
  Json arr = Json::array();
  for (const auto& r : rois) arr.push_back({{"name", r.name}, {"sources", r.sources}});
  return {{"rois", arr}};
}

std::vector<NamedRoi> load_rois(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("ROI file " + path.string() + " does not exist");
  return rois_from_json(load_json(path));
}

}  // namespace stftr

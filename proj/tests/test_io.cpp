#include <doctest.h>

#include <cstring>
#include <functional>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "stftr/cli.hpp"
#include "stftr/config_json.hpp"
#include "stftr/errors.hpp"
#include "stftr/io.hpp"
#include "stftr/report.hpp"
#include "test_support.hpp"

using namespace stftr;
using namespace stftr::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("stftr_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_bits(const double* a, const double* b, std::size_t n) { return std::memcmp(a, b, n * sizeof(double)) == 0; }

Json small_spec_json(double noise_level, const Json& snr) {
  return {{"n", 16},
          {"m", 24},
          {"T", 32},
          {"q", 10},
          {"window", 16},
          {"step", 4},
          {"noise_level", noise_level},
          {"snr", snr},
          {"regions",
           {{{"name", "target"}, {"sources", {2, 3, 4}}, {"target", true},
             {"gabor", {{"center", 0.15}, {"width", 0.05}, {"carrier", 3.0}, {"amplitude", 1.0}}}},
            {{"name", "other"}, {"sources", {12, 13, 14}}, {"target", false}}}}};
}

int cli(std::vector<std::string> args) { return run_cli(args); }

void rewrite_manifest(const fs::path& dir, const std::function<void(Json&)>& edit) {
  Json j = Json::parse(slurp(dir / "manifest.json"));
  edit(j);
  std::ofstream(dir / "manifest.json", std::ios::trunc) << j.dump(2);
}

}  // namespace

TEST_CASE("property: containers round-trip arrays bit for bit") {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> dim(0, 5);
  std::normal_distribution<double> normal;
  for (int c = 0; c < 100; ++c) {
    TempDir tmp;
    std::vector<std::size_t> shape(1 + static_cast<std::size_t>(c % 3));
    std::size_t count = 1;
    for (auto& d : shape) count *= (d = dim(gen));
    std::vector<double> reals(count);
    for (double& v : reals) v = normal(gen) * std::pow(10.0, normal(gen) * 20.0);
    if (count > 0) reals[0] = -0.0;
    std::vector<cplx> complexes(count);
    for (auto& v : complexes) v = cplx(normal(gen), normal(gen));
    {
      ContainerWriter w(tmp.path);
      w.add("reals", shape, reals.data());
      w.add("complexes", shape, complexes.data());
      w.meta()["case"] = c;
      w.finish();
    }
    const ContainerReader r(tmp.path);
    CHECK(r.info("reals").shape == shape);
    CHECK(r.info("complexes").type == ElementType::c128);
    CHECK(r.meta()["case"] == c);
    const auto back = r.read_f64("reals");
    const auto cback = r.read_c128("complexes");
    REQUIRE(back.size() == count);
    CHECK(same_bits(back.data(), reals.data(), count));
    CHECK(same_bits(reinterpret_cast<const double*>(cback.data()), reinterpret_cast<const double*>(complexes.data()),
                    2 * count));
  }
}

TEST_CASE("container read errors name the offending array") {
  TempDir tmp;
  std::mt19937_64 gen(2);
  const RowMatrix A = random_matrix(gen, 3, 4);
  {
    ContainerWriter w(tmp.path);
    w.add("A", A);
    w.add("B", random_matrix(gen, 2, 2));
    w.finish();
  }
  CHECK(ContainerReader(tmp.path).matrix("A") == A);

  rewrite_manifest(tmp.path, [](Json& j) { j["arrays"][0]["shape"] = {3, 5}; });
  try {
    ContainerReader r(tmp.path);
    FAIL("corrupt shape accepted");
  } catch (const IoError& e) {
    CHECK(e.array() == "A");
    CHECK(std::string(e.what()).find("'A'") != std::string::npos);
  }
  rewrite_manifest(tmp.path, [](Json& j) {
    j["arrays"][0]["shape"] = {3, 4};
    j["arrays"][1]["dtype"] = "f32";
  });
  try {
    ContainerReader r(tmp.path);
    FAIL("unknown dtype accepted");
  } catch (const IoError& e) {
    CHECK(e.array() == "B");
  }
  rewrite_manifest(tmp.path, [](Json& j) {
    j["arrays"][1]["dtype"] = "f64";
    j["schema_version"] = 99;
  });
  CHECK_THROWS_AS(ContainerReader(tmp.path), IoError);
  rewrite_manifest(tmp.path, [](Json& j) { j["schema_version"] = kSchemaVersion; });
  fs::remove(tmp.path / "B.bin");
  try {
    ContainerReader r(tmp.path);
    FAIL("missing file accepted");
  } catch (const IoError& e) {
    CHECK(e.array() == "B");
  }
  CHECK_THROWS_AS(ContainerReader(tmp.path / "absent"), IoError);
}

TEST_CASE("container writer rejects bad names and wrong element reads") {
  TempDir tmp;
  ContainerWriter w(tmp.path);
  const double x = 1.0;
  CHECK_THROWS_AS(w.add("../evil", {1}, &x), IoError);
  w.add("x", {1}, &x);
  CHECK_THROWS_AS(w.add("x", {1}, &x), IoError);
  w.finish();
  const ContainerReader r(tmp.path);
  CHECK_THROWS_AS(r.read_c128("x"), IoError);
  CHECK_THROWS_AS(r.read_f64("y"), IoError);
}

TEST_CASE("desk-default dataset container has the documented arrays and round-trips exactly") {
  TempDir tmp;
  const auto spec = SimulationSpec::desk_default(4);
  const auto [data, truth] = generate_dataset(spec);
  write_dataset(tmp.path, data, &truth, to_json(spec));
  const ContainerReader r(tmp.path);
  CHECK(r.info("M").shape == std::vector<std::size_t>{20, 50, 100});
  CHECK(r.info("G").shape == std::vector<std::size_t>{50, 200});
  CHECK(r.info("X").shape == std::vector<std::size_t>{20, 2});
  CHECK(r.info("Z_true").shape == std::vector<std::size_t>{200, 225, 2});
  const auto back = read_dataset(tmp.path);
  REQUIRE(back.data.q() == data.q());
  for (std::size_t i = 0; i < data.q(); ++i)
    CHECK(same_bits(back.data.M[i].data(), data.M[i].data(), static_cast<std::size_t>(data.M[i].size())));
  CHECK(same_bits(back.data.G.data(), data.G.data(), static_cast<std::size_t>(data.G.size())));
  CHECK(same_bits(back.data.X.data(), data.X.data(), static_cast<std::size_t>(data.X.size())));
  REQUIRE(back.z_true.has_value());
  CHECK(same_bits(back.z_true->reals().data(), truth.z_true.reals().data(), truth.z_true.reals().size()));
  CHECK(same_bits(back.noise_covariance->data(), truth.noise_covariance.data(),
                  static_cast<std::size_t>(truth.noise_covariance.size())));
  CHECK(simulation_spec_from_json(back.spec).seed == 4);
}

TEST_CASE("run configuration defaults round-trip through JSON") {
  const RunConfig def;
  const Json j = to_json(def);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.bootstrap.B == 20);
  CHECK(back.solver.active_batch == 50);
  CHECK(back.model.window_ms == 160.0);
  CHECK(back.model.step_ms == 40.0);
  CHECK(back.method == Method::stft_r);
  CHECK_FALSE(back.penalty.alpha.has_value());
  CHECK(run_config_from_json(Json::object()).cv.n_folds == 5);
}

TEST_CASE("run configuration parsing overrides given keys and rejects unknown ones") {
  const RunConfig c = run_config_from_json(
      Json::parse(R"({"penalty": {"alpha": 1.5, "beta": 0.5, "gamma": 0.01}, "bootstrap": {"B": 7}, "method": "mne-r"})"));
  CHECK(*c.penalty.alpha == 1.5);
  CHECK(c.bootstrap.B == 7);
  CHECK(c.method == Method::mne_r);
  CHECK(c.cv.n_folds == 5);

  auto rejects = [](const char* text, const char* needle) {
    try {
      run_config_from_json(Json::parse(text));
      return false;
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
  };
  CHECK(rejects(R"({"solvr": {}})", "solvr"));
  CHECK(rejects(R"({"solver": {"tolz": 1e-6}})", "solver.tolz"));
  CHECK(rejects(R"({"bootstrap": {"B": -3}})", "bootstrap.B"));
  CHECK(rejects(R"({"bootstrap": {"B": "many"}})", "bootstrap.B"));
  CHECK(rejects(R"({"method": "lasso"})", "lasso"));
  CHECK(rejects(R"({"penalty": {"alpha": 1.0}})", "penalty"));
  CHECK(rejects(R"({"bootstrap": {"B": 1}})", "bootstrap"));
  CHECK(rejects(R"([1, 2])", "object"));
}

TEST_CASE("simulation spec JSON round trip and region replacement") {
  const auto spec = SimulationSpec::desk_default(9);
  const auto back = simulation_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  const auto small = simulation_spec_from_json(small_spec_json(0.2, "inf"));
  CHECK(small.m == 24);
  CHECK(small.regions.size() == 2);
  CHECK(std::isinf(small.snr));
  CHECK(small.regions[1].target == false);
  CHECK_THROWS_AS(simulation_spec_from_json(Json::parse(R"({"regions": [{"name": "a", "sorces": [1]}]})")),
                  ConfigError);
  CHECK_THROWS_AS(simulation_spec_from_json(Json::parse(R"({"snr": "loud"})")), ConfigError);
}

TEST_CASE("ROI files") {
  const std::vector<NamedRoi> rois{{"a", {1, 2}}, {"b", {7}}};
  const auto back = rois_from_json(rois_to_json(rois));
  REQUIRE(back.size() == 2);
  CHECK(back[1].name == "b");
  CHECK(back[0].sources == std::vector<std::size_t>{1, 2});
  CHECK_THROWS_AS(rois_from_json(Json::parse(R"({"rois": [{"name": "a", "sources": []}]})")), ConfigError);
  CHECK_THROWS_AS(rois_from_json(Json::parse(R"({"regions": []})")), ConfigError);
  CHECK_THROWS_AS(load_rois("/nonexistent/rois.json"), ConfigError);
}

TEST_CASE("avg |T| CSV has frequency rows in Hz and window columns in ms") {
  const auto dict = StftDictionary::build(100, 16, 4);
  RowMatrix v = RowMatrix::Zero(9, 25);
  v(1, 3) = 2.5;
  std::ostringstream os;
  write_avg_abs_t_csv(os, v, dict, 100.0);
  std::istringstream is(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 10);
  CHECK(lines[0].rfind("freq_hz,30,70,110,", 0) == 0);
  CHECK(lines[0].substr(lines[0].size() - 4) == ",990");
  CHECK(lines[2].rfind("6.25,0,0,0,2.5,0", 0) == 0);
  CHECK(lines[9].rfind("50,", 0) == 0);
  CHECK_THROWS_AS(write_avg_abs_t_csv(os, RowMatrix::Zero(8, 25), dict, 100.0), DimensionError);
}

TEST_CASE("SVG heatmap embeds every cell value") {
  const auto dict = StftDictionary::build(100, 16, 4);
  std::mt19937_64 gen(3);
  const RowMatrix v = random_matrix(gen, 9, 25).cwiseAbs();
  const std::string svg = svg_heatmap(v, dict, 100.0, "test <map>");
  CHECK(svg.find("test &lt;map&gt;") != std::string::npos);
  CHECK(svg.find("frequency (Hz)") != std::string::npos);
  CHECK(svg.find("time (ms)") != std::string::npos);
  const std::regex cell(R"re(data-row="(\d+)" data-col="(\d+)" data-freq-hz="([^"]+)" data-time-ms="([^"]+)" data-value="([^"]+)")re");
  std::size_t cells = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cell); it != std::sregex_iterator(); ++it) {
    const int h = std::stoi((*it)[1]);
    const int j = std::stoi((*it)[2]);
    CHECK(std::stod((*it)[3]) == doctest::Approx(6.25 * h));
    CHECK(std::stod((*it)[4]) == doctest::Approx(30.0 + 40.0 * j));
    CHECK(std::stod((*it)[5]) == v(h, j));
    ++cells;
  }
  CHECK(cells == 225);
}

TEST_CASE("cli: simulate, fit, bootstrap and compare on a small dataset") {
  TempDir tmp;
  const auto p = [&](const char* name) { return (tmp.path / name).string(); };
  save_json(tmp.path / "spec.json", small_spec_json(0.1, 1.0));
  save_json(tmp.path / "config.json",
            Json::parse(R"({"cv": {"alpha_grid": [0.1], "beta_grid": [0.05, 0.2], "lambda2_grid": [1e-3, 1e-2]}})"));

  REQUIRE(cli({"simulate", "--config", p("spec.json"), "--seed", "5", "--out", p("data")}) == kExitOk);
  CHECK(fs::exists(tmp.path / "data" / "rois.json"));
  const auto stored = read_dataset(tmp.path / "data");
  CHECK(stored.data.q() == 10);
  CHECK(stored.spec["seed"] == 5);

  const int fit_code = cli({"fit", "--data", p("data"), "--config", p("config.json"), "--out", p("fit_s")});
  CHECK((fit_code == kExitOk || fit_code == kExitWarnings));
  const auto sfit = read_fit(tmp.path / "fit_s");
  CHECK(sfit.method == "stft-r");
  CHECK(sfit.meta["kkt"]["converged"] == true);
  CHECK(fs::exists(tmp.path / "fit_s" / "cv_table.csv"));
  CHECK(slurp(tmp.path / "fit_s" / "cv_table.csv").rfind("alpha,beta,gamma,lambda2,fold,error", 0) == 0);

  REQUIRE(cli({"fit", "--data", p("data"), "--config", p("config.json"), "--method", "mne-r", "--out", p("fit_m")}) ==
          kExitOk);
  const auto mfit = read_fit(tmp.path / "fit_m");
  CHECK(mfit.method == "mne-r");
  CHECK(mfit.z.count_nonzero() == mfit.z.size());

  // Identical inputs and seed give identical bytes.
  for (const char* out : {"boot_a", "boot_b"}) {
    const int code = cli({"bootstrap", "--data", p("data"), "--fit", p("fit_s"), "--config", p("config.json"),
                          "--seed", "11", "--threads", "2", "--out", p(out)});
    CHECK((code == kExitOk || code == kExitWarnings));
  }
  for (const char* f : {"se.bin", "t_stat.bin", "manifest.json", "avg_abs_t_target.csv"})
    CHECK(slurp(tmp.path / "boot_a" / f) == slurp(tmp.path / "boot_b" / f));
  const auto inf = read_inference(tmp.path / "boot_a");
  CHECK(inf.B == 20);
  CHECK(inf.seed == 11);

  // A fit compared with itself has every ratio equal to one.
  REQUIRE(cli({"compare", "--data", p("data"), "--stftr", p("fit_m"), "--mner", p("fit_m"), "--config",
               p("config.json"), "--out", p("same")}) != kExitError);
  const std::string csv = slurp(tmp.path / "same" / "compare.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    CHECK(line.substr(line.rfind(',') + 1) == "1");
    ++rows;
  }
  CHECK(rows == 4);  // roi, all and one per ROI
  CHECK(fs::exists(tmp.path / "same" / "avg_abs_t_stft-r_target.svg"));

  CHECK(cli({"compare", "--data", p("data"), "--stftr", p("fit_s"), "--mner", p("missing"), "--out", p("cmp")}) ==
        kExitError);
}

TEST_CASE("cli: error paths") {
  TempDir tmp;
  const auto p = [&](const char* name) { return (tmp.path / name).string(); };
  save_json(tmp.path / "spec.json", small_spec_json(0.1, 1.0));
  REQUIRE(cli({"simulate", "--config", p("spec.json"), "--out", p("data")}) == kExitOk);

  save_json(tmp.path / "bad.json", Json::parse(R"({"solver": {"speed": 3}})"));
  CHECK(cli({"fit", "--data", p("data"), "--config", p("bad.json"), "--out", p("f1")}) == kExitError);
  save_json(tmp.path / "roi_missing.json", Json::parse(R"({"penalty": {"roi_file": "nowhere.json"}})"));
  CHECK(cli({"fit", "--data", p("data"), "--config", p("roi_missing.json"), "--out", p("f2")}) == kExitError);
  CHECK(cli({"fit", "--data", p("nodata"), "--out", p("f3")}) == kExitError);
  CHECK(cli({"bootstrap", "--data", p("data"), "--fit", p("nofit"), "--out", p("b")}) == kExitError);
  CHECK(cli({"frobnicate"}) == kExitError);
  CHECK(cli({"fit", "--data", p("data")}) == kExitError);
}

TEST_CASE("cli: noiseless data gives a converged fit covering the true rows and degenerate MNE-R spread") {
  TempDir tmp;
  const auto p = [&](const char* name) { return (tmp.path / name).string(); };
  save_json(tmp.path / "spec.json", small_spec_json(0.0, "inf"));
  REQUIRE(cli({"simulate", "--config", p("spec.json"), "--out", p("data")}) == kExitOk);
  const auto stored = read_dataset(tmp.path / "data");
  CHECK(stored.noise_covariance->cwiseAbs().maxCoeff() == 0.0);

  save_json(tmp.path / "config.json",
            Json::parse(R"({"penalty": {"alpha": 1e-6, "beta": 1e-6, "gamma": 1e-8}})"));
  const int code = cli({"fit", "--data", p("data"), "--config", p("config.json"), "--out", p("fit")});
  CHECK((code == kExitOk || code == kExitWarnings));
  const auto fit = read_fit(tmp.path / "fit");
  CHECK(fit.meta["kkt"]["converged"] == true);
  for (std::size_t i = 0; i < stored.z_true->m(); ++i)
    if (!stored.z_true->row_is_zero(i)) CHECK_FALSE(fit.z.row_is_zero(i));

  REQUIRE(cli({"fit", "--data", p("data"), "--method", "mne-r", "--out", p("fit_m")}) == kExitOk);
  CHECK(cli({"bootstrap", "--data", p("data"), "--fit", p("fit_m"), "--out", p("boot")}) == kExitWarnings);
  const ContainerReader r(tmp.path / "boot");
  CHECK(r.meta()["degenerate_se"] == true);
}

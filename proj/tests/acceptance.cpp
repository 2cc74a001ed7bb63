// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stftr/bootstrap.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/parallel.hpp"
#include "stftr/penalty.hpp"
#include "stftr/pipeline.hpp"
#include "stftr/refit_cv.hpp"
#include "stftr/simulator.hpp"
#include "stftr/solver.hpp"
#include "test_support.hpp"

using namespace stftr;
using namespace stftr::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Instance planted(std::size_t n, std::size_t m, std::size_t T, std::size_t q, std::size_t p,
                 const std::vector<std::size_t>& rows, std::uint64_t seed, double noise) {
  auto inst = make_instance(n, m, T, 8, 4, q, p, seed);
  std::mt19937_64 gen(seed + 1);
  std::normal_distribution<double> normal;
  CoefTensor z(m, inst.dict.size(), p);
  for (std::size_t i : rows)
    for (std::size_t j = 0; j < inst.dict.size(); j += 3)
      for (std::size_t k = 0; k < p; ++k) z(i, j, k) = cplx(normal(gen), normal(gen));
  std::normal_distribution<double> eps(0.0, noise);
  for (std::size_t r = 0; r < q; ++r) {
    inst.data.M[r] = predict_trial(z, inst.data, inst.dict, r);
    for (Eigen::Index e = 0; e < inst.data.M[r].size(); ++e) inst.data.M[r].data()[e] += eps(gen);
  }
  return inst;
}

Outcome prox_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.5), step_dist(0.2, 2.0);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t m = 1 + gen() % 3, s = 1 + gen() % 6, p = 1 + gen() % 2;
    std::vector<std::vector<std::size_t>> rois;
    if (m >= 2 && gen() % 2) rois.push_back({0, m - 1});
    const auto policy = gen() % 2 ? WeightPolicy::uniform : WeightPolicy::roi_zero;
    const auto tree = build_group_tree(rois, m, s, p, 3.0 * u(gen), u(gen), u(gen), policy);
    const auto y = random_tensor(gen, m, s, p);
    const double step = step_dist(gen);
    const auto want = dual_prox_oracle(y, tree.ordered_groups(), step, 1e-14);
    worst = std::max(worst, max_abs_diff(prox(y, tree, step), want));
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-6 && secs < 10.0,
          "50 instances, max |prox - oracle| = " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome gradient_check() {
  std::mt19937_64 gen(77);
  double worst = 0.0;
  for (int c = 0; c < 10; ++c) {
    const std::size_t n = 2 + gen() % 4, m = 1 + gen() % 6, q = 2 + gen() % 4, p = 1 + gen() % 2;
    const auto inst = make_instance(n, m, 16, 8, 4, q, p, 300 + static_cast<std::uint64_t>(c));
    const auto z = random_tensor(gen, m, inst.dict.size(), p);
    const auto g = gradient(z, inst.data, inst.dict);
    const auto gr = g.reals();
    const double h = 1e-3;
    for (int k = 0; k < 20; ++k) {
      const std::size_t idx = gen() % gr.size();
      CoefTensor zp = z, zm = z;
      zp.reals()[idx] += h;
      zm.reals()[idx] -= h;
      const double fd = (objective(zp, inst.data, inst.dict) - objective(zm, inst.data, inst.dict)) / (2.0 * h);
      const double rel = fd == gr[idx] ? 0.0 : std::abs(fd - gr[idx]) / std::abs(gr[idx]);
      worst = std::max(worst, rel);
    }
  }
  return {worst <= 1e-6, "200 coordinates, max relative error = " + fmt("%.2e", worst)};
}

double reference_objective(const ForwardModel& model, const Instance& inst, const GroupTree& tree,
                           std::size_t iterations) {
  const auto A = dense_operator(inst.data, inst.dict.dense());
  const Eigen::MatrixXd N = A.transpose() * A;
  const Eigen::VectorXd atb = A.transpose() * stacked_data(inst.data);
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(N, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const auto groups = tree.ordered_groups();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(A.cols());
  for (std::size_t it = 0; it < iterations; ++it) {
    const Eigen::VectorXd y = z - (N * z - atb) / L;
    z = to_vector(prox_ordered(from_vector(y, tree.m, tree.s, tree.p), groups, 1.0 / L));
  }
  return total_objective(model, tree, from_vector(z, tree.m, tree.s, tree.p));
}

Outcome solver_optimality() {
  const auto start = Clock::now();
  std::mt19937_64 gen(5);
  double worst_obj = 0.0, worst_kkt = 0.0;
  bool all_converged = true;
  for (int c = 0; c < 10; ++c) {
    const std::size_t m = 3 + gen() % 3, p = 1 + gen() % 2;
    const auto inst = planted(5, m, 16, 4, p, {gen() % m}, 40 + static_cast<std::uint64_t>(c), 0.1);
    ForwardModel model(inst.data, inst.dict);
    const double gmax = model.gradient(model.zeros()).norm();
    std::uniform_real_distribution<double> u(0.02, 0.2);
    const auto tree = build_group_tree({{0, 1}}, m, inst.dict.size(), p, u(gen) * gmax, 0.2 * u(gen) * gmax,
                                       0.05 * u(gen) * gmax);
    const auto res = active_set_solve(model, tree, SolverConfig{}, InitialActive::roi);
    all_converged = all_converged && res.converged;
    const double got = total_objective(model, tree, res.z);
    const double want = reference_objective(model, inst, tree, 50000);
    worst_obj = std::max(worst_obj, std::abs(got - want) / std::abs(want));
    const double baseline = kkt_violation(model, tree, model.zeros()).total_violation;
    const double final_kkt = kkt_violation(model, tree, res.z).total_violation;
    worst_kkt = std::max(worst_kkt, final_kkt / baseline);
  }
  const double secs = seconds_since(start);
  return {all_converged && worst_obj <= 1e-5 && worst_kkt <= 1e-6 && secs < 120.0,
          "10 instances, max relative objective gap = " + fmt("%.2e", worst_obj) +
              ", max KKT / baseline = " + fmt("%.2e", worst_kkt) + ", " + fmt("%.1f", secs) + " s"};
}

Outcome active_set_vs_full() {
  double worst = 0.0;
  bool grew = true;
  for (std::uint64_t seed : {11, 12, 13}) {
    const auto inst = planted(12, 6, 32, 4, 2, {3, 4}, seed, 0.05);
    ForwardModel model(inst.data, inst.dict);
    const double gmax = model.gradient(model.zeros()).norm();
    const auto tree = build_group_tree({{0, 1}}, 6, inst.dict.size(), 2, 0.05 * gmax, 0.01 * gmax, 0.002 * gmax);
    const SolverConfig cfg;
    const auto res = active_set_solve(model, tree, cfg, InitialActive::roi);
    const auto full = fista(model, tree, cfg, model.zeros());
    const double a = total_objective(model, tree, res.z);
    const double b = total_objective(model, tree, full.z);
    worst = std::max(worst, std::abs(a - b) / std::abs(b));
    grew = grew && res.converged && !res.z.row_is_zero(3) && !res.z.row_is_zero(4);
  }
  return {grew && worst <= 1e-5, "3 instances, signal outside the initial set recovered: " +
                                     std::string(grew ? "yes" : "no") +
                                     ", max relative objective gap = " + fmt("%.2e", worst)};
}

Outcome stft_round_trip() {
  const auto dict = StftDictionary::build(100, 16, 4);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    std::vector<double> u(100);
    for (auto& v : u) v = normal(gen);
    const auto back = dict.synthesize(dict.analyze(u));
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t) {
      num += (back[t] - u[t]) * (back[t] - u[t]);
      den += u[t] * u[t];
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  return {worst <= 1e-10, "100 series at T=100, window 16, step 4, max relative error = " + fmt("%.2e", worst)};
}

struct Study {
  std::vector<StudyRun> runs;
  double seconds = 0.0;
};

Study run_desk_study() {
  Study study;
  const auto start = Clock::now();
  const RunConfig config;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = SimulationSpec::desk_default(seed);
    spec.noise_level = 0.1;
    study.runs.push_back(run_study(spec, config, resolve_threads(0)));
    const auto& r = study.runs.back();
    std::printf("  seed %llu: ratio_roi %.4f, ratio_all %.4f, low-frequency mass stft-r %.4f, mne-r %.4f, %zu rows\n",
                static_cast<unsigned long long>(seed), r.ratio_roi, r.ratio_all, r.low_freq_stftr, r.low_freq_mner,
                r.support_rows);
    std::fflush(stdout);
  }
  study.seconds = seconds_since(start);
  return study;
}

Outcome study_direction(const Study& study) {
  double mean = 0.0;
  bool converged = true;
  for (const auto& r : study.runs) {
    mean += r.ratio_roi;
    converged = converged && r.stftr_converged;
  }
  mean /= static_cast<double>(study.runs.size());
  return {mean <= 0.9 && study.seconds <= 900.0 && converged,
          "5 seeds, mean within-ROI MSE ratio = " + fmt("%.4f", mean) + ", " + fmt("%.0f", study.seconds) + " s"};
}

Outcome sparsity_pattern(const Study& study) {
  bool pass = true;
  double min_stftr = 1.0, max_mner = 0.0;
  for (const auto& r : study.runs) {
    pass = pass && r.low_freq_stftr >= 0.8 && r.low_freq_mner < r.low_freq_stftr;
    min_stftr = std::min(min_stftr, r.low_freq_stftr);
    max_mner = std::max(max_mner, r.low_freq_mner);
  }
  return {pass, "lowest two frequency rows: stft-r min " + fmt("%.4f", min_stftr) + ", mne-r max " +
                    fmt("%.4f", max_mner)};
}

Outcome bootstrap_sanity() {
  std::mt19937_64 gen(4);
  double worst = 0.0;
  for (std::size_t q : {2, 5, 10, 20, 37}) {
    const RowMatrix intercept = RowMatrix::Ones(static_cast<Eigen::Index>(q), 1);
    for (double h : leverage(intercept)) worst = std::max(worst, std::abs(h - 1.0 / static_cast<double>(q)));
    for (std::size_t p = 1; p <= std::min<std::size_t>(q, 4); ++p) {
      const auto h = leverage(random_design(gen, q, p));
      double sum = 0.0;
      for (double v : h) sum += v;
      worst = std::max(worst, std::abs(sum - static_cast<double>(p)));
    }
  }

  const auto inst = planted(6, 4, 16, 8, 2, {0}, 21, 0.4);
  ForwardModel model(inst.data, inst.dict);
  std::vector<std::size_t> support;
  for (std::size_t f = 0; f < inst.dict.size() * 2; ++f) support.push_back(f);
  const auto z = l2_refit(model, support, 1e-2).z;
  BootstrapConfig cfg;
  const std::size_t default_b = cfg.B;
  cfg.seed = 99;
  cfg.lambda2_grid = {1e-3, 1e-1};
  const auto a = residual_bootstrap(inst.data, inst.dict, support, z, cfg);
  cfg.threads = 2;
  const auto b = residual_bootstrap(inst.data, inst.dict, support, z, cfg);
  const auto same = [](const CoefTensor& x, const CoefTensor& y) {
    return std::equal(x.values().begin(), x.values().end(), y.values().begin(), y.values().end());
  };
  const bool identical = same(a.se, b.se) && same(a.t_stat, b.t_stat) &&
                         a.replicate_lambda2 == b.replicate_lambda2;
  const bool b20 = default_b == 20 && RunConfig{}.bootstrap.B == 20 && a.B == 20 && a.replicate_lambda2.size() == 20;
  return {worst <= 1e-10 && identical && b20,
          "max leverage identity error = " + fmt("%.2e", worst) + ", reproducible: " + (identical ? "yes" : "no") +
              ", default B = " + std::to_string(default_b)};
}

Outcome property_suites() {
  const std::vector<std::string> suites = {STFTR_PROPERTY_SUITES};
  std::size_t failed = 0;
  for (const auto& exe : suites) {
    const std::string cmd = "\"" + exe + "\" --test-case=\"property:*\" --minimal=true";
    if (std::system((cmd + " >/dev/null 2>&1").c_str()) != 0) {
      ++failed;
      [[maybe_unused]] const int shown = std::system(cmd.c_str());
    }
  }
  return {failed == 0, std::to_string(suites.size()) + " suites, " + std::to_string(failed) + " failing"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %d %s: %s (%s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  report(1, "prox oracle equivalence", prox_oracle());
  report(2, "gradient correctness", gradient_check());
  report(3, "solver optimality", solver_optimality());
  report(4, "active-set equals full solve", active_set_vs_full());
  report(5, "stft round trip", stft_round_trip());
  const Study study = run_desk_study();
  report(6, "simulation-study direction", study_direction(study));
  report(7, "time-frequency sparsity pattern", sparsity_pattern(study));
  report(8, "bootstrap sanity", bootstrap_sanity());
  report(9, "invariant suites", property_suites());
  return failures == 0 ? 0 : 1;
}

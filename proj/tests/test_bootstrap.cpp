#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stftr/bootstrap.hpp"
#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/refit_cv.hpp"
#include "test_support.hpp"

using namespace stftr;
using namespace stftr::testing;

namespace {

struct Planted {
  Instance inst;
  CoefTensor z;
  std::vector<std::size_t> support;
};

Planted planted(std::size_t m, std::size_t n, std::size_t q, std::uint64_t seed, double noise) {
  Planted out{make_instance(n, m, 16, 8, 4, q, 2, seed), {}, {}};
  std::mt19937_64 gen(seed + 5);
  std::normal_distribution<double> normal;
  out.z = CoefTensor(m, out.inst.dict.size(), 2);
  for (std::size_t j = 0; j < out.inst.dict.size(); j += 3)
    for (std::size_t k = 0; k < 2; ++k) {
      const bool real = out.inst.dict.real_row(j);
      out.z(0, j, k) = cplx(normal(gen), real ? 0.0 : normal(gen));
      out.support.push_back(out.z.index(0, j, k));
    }
  std::sort(out.support.begin(), out.support.end());
  std::normal_distribution<double> eps(0.0, noise);
  for (std::size_t r = 0; r < q; ++r) {
    out.inst.data.M[r] = predict_trial(out.z, out.inst.data, out.inst.dict, r);
    if (noise > 0.0)
      for (Eigen::Index e = 0; e < out.inst.data.M[r].size(); ++e) out.inst.data.M[r].data()[e] += eps(gen);
  }
  return out;
}

bool same(const CoefTensor& a, const CoefTensor& b) {
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

BootstrapConfig config(std::size_t B, std::uint64_t seed, std::vector<double> grid = {1e-3}) {
  BootstrapConfig cfg;
  cfg.B = B;
  cfg.seed = seed;
  cfg.lambda2_grid = std::move(grid);
  return cfg;
}

}  // namespace

TEST_CASE("split halves by trial parity") {
  const auto a = make_instance(3, 2, 16, 8, 4, 20, 2, 1);
  const auto s = split_halves(a.data);
  CHECK(s.first.q() == 10);
  CHECK(s.second.q() == 10);
  CHECK(s.first_trials.front() == 0);
  CHECK(s.second_trials.front() == 1);
  CHECK(std::abs(s.first.X.col(1).sum()) < 1e-12);
  CHECK(std::abs(s.second.X.col(1).sum()) < 1e-12);
  CHECK(s.second.M[2] == a.data.M[5]);

  const auto b = make_instance(3, 2, 16, 8, 4, 5, 2, 2);
  const auto t = split_halves(b.data);
  CHECK(t.first.q() == 3);
  CHECK(t.second.q() == 2);
  CHECK_THROWS_AS(split_halves(make_instance(3, 2, 16, 8, 4, 2, 2, 3).data), ConfigError);
  CHECK_THROWS_AS(split_halves(make_instance(3, 2, 16, 8, 4, 3, 2, 3).data), ConfigError);
}

TEST_CASE("leverage of an intercept-only design is 1/q") {
  const RowMatrix X = RowMatrix::Ones(8, 1);
  for (double h : leverage(X)) CHECK(h == doctest::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("property: leverage matches the dense hat matrix and sums to p") {
  std::mt19937_64 gen(4);
  for (int c = 0; c < 100; ++c) {
    const std::size_t q = 5 + static_cast<std::size_t>(c % 11);
    const std::size_t p = 1 + static_cast<std::size_t>(c % 3);
    const RowMatrix X = random_design(gen, q, p);
    const auto h = leverage(X);
    const Eigen::MatrixXd Xd = X;
    const Eigen::MatrixXd H = Xd * (Xd.transpose() * Xd).inverse() * Xd.transpose();
    double sum = 0.0;
    for (std::size_t r = 0; r < q; ++r) {
      CHECK(std::abs(h[r] - H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r))) <= 1e-12);
      sum += h[r];
    }
    CHECK(sum == doctest::Approx(static_cast<double>(p)).epsilon(1e-12));
  }
}

TEST_CASE("collinear design names the offending column") {
  RowMatrix X(4, 3);
  X << 1, 1, 2, 1, -1, -2, 1, 2, 4, 1, -2, -4;
  try {
    leverage(X);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("collinear") != std::string::npos);
    CHECK((msg.find('1') != std::string::npos || msg.find('2') != std::string::npos));
  }
}

TEST_CASE("trial draws are reproducible, in range and differ across replicates") {
  const auto a = draw_trials(9, 0, 12);
  CHECK(a == draw_trials(9, 0, 12));
  CHECK(a != draw_trials(9, 1, 12));
  CHECK(a != draw_trials(10, 0, 12));
  for (std::size_t d : a) CHECK(d < 12);
}

TEST_CASE("bootstrap datasets satisfy the model identity") {
  const auto pl = planted(4, 5, 8, 11, 0.3);
  const auto& data = pl.inst.data;
  std::vector<RowMatrix> pred;
  for (std::size_t r = 0; r < data.q(); ++r) pred.push_back(predict_trial(pl.z, data, pl.inst.dict, r));
  const auto res = rescaled_residuals(data, pl.inst.dict, pl.z);
  const auto h = leverage(data.X);
  for (std::size_t r = 0; r < data.q(); ++r) {
    const RowMatrix raw = data.M[r] - pred[r];
    CHECK((res[r] * std::sqrt(1.0 - h[r]) - raw).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + raw.cwiseAbs().maxCoeff()));
  }
  const auto draw = draw_trials(3, 2, data.q());
  const auto boot = bootstrap_dataset(data, pred, res, draw);
  for (std::size_t r = 0; r < data.q(); ++r) {
    const RowMatrix d = boot.M[r] - pred[r];
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() *
                       (pred[r].cwiseAbs().maxCoeff() + res[draw[r]].cwiseAbs().maxCoeff());
    CHECK((d - res[draw[r]]).cwiseAbs().maxCoeff() <= tol);
  }
  CHECK(boot.X == data.X);
  CHECK(boot.G == data.G);
}

TEST_CASE("summary uses the B - 1 standard deviation") {
  InferenceResult r;
  r.estimate = CoefTensor(1, 1, 1);
  r.estimate[0] = cplx(4.0, -2.0);
  r.support = {0};
  CoefTensor a(1, 1, 1), b(1, 1, 1);
  a[0] = cplx(1.0, 0.0);
  b[0] = cplx(3.0, 2.0);
  summarize_replicates(r, {a, b}, [](std::size_t, int) { return true; });
  CHECK(r.se[0].real() == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.se[0].imag() == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.t_stat[0].real() == doctest::Approx(4.0 / std::sqrt(2.0)));
  CHECK(r.t_stat[0].imag() == doctest::Approx(-2.0 / std::sqrt(2.0)));
  CHECK_FALSE(r.degenerate_se());
  CHECK_THROWS_AS(summarize_replicates(r, {a}, [](std::size_t, int) { return true; }), ConfigError);
}

TEST_CASE("zero-variance replicates are flagged with a zero t sentinel") {
  InferenceResult r;
  r.estimate = CoefTensor(1, 2, 1);
  r.estimate[0] = cplx(1.0, 0.0);
  r.estimate[1] = cplx(1.0, 0.0);
  r.support = {0, 1};
  CoefTensor a(1, 2, 1), b(1, 2, 1);
  a[0] = b[0] = cplx(1.0, 0.0);
  a[1] = cplx(0.5, 0.0);
  b[1] = cplx(1.5, 0.0);
  // Imaginary parts are not estimable here, so their zero se is not a defect.
  summarize_replicates(r, {a, b}, [](std::size_t, int part) { return part == 0; });
  CHECK(r.se[0] == cplx{});
  CHECK(r.t_stat[0] == cplx{});
  CHECK(r.degenerate == std::vector<std::size_t>{0});
}

TEST_CASE("noiseless data yields degenerate standard errors") {
  const auto pl = planted(4, 6, 8, 12, 0.0);
  ForwardModel model(pl.inst.data, pl.inst.dict);
  RefitConfig refit;
  refit.cg_tol = 1e-14;
  const auto z = l2_refit(model, pl.support, 1e-9, refit).z;
  const auto res = residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, config(10, 1), refit);
  CHECK(res.degenerate_se());
}

TEST_CASE("bootstrap is reproducible and independent of the thread count") {
  const auto pl = planted(4, 6, 8, 13, 0.5);
  ForwardModel model(pl.inst.data, pl.inst.dict);
  const auto z = l2_refit(model, pl.support, 1e-2).z;
  auto cfg = config(8, 77, {1e-3, 1e-1});
  const auto a = residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, cfg);
  const auto b = residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, cfg);
  cfg.threads = 3;
  const auto c = residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, cfg);
  CHECK(same(a.se, b.se));
  CHECK(same(a.se, c.se));
  CHECK(a.replicate_lambda2 == c.replicate_lambda2);
  CHECK(a.B == 8);
  CHECK(a.seed == 77);
  CHECK(a.method == "stft-r");
  cfg.seed = 78;
  CHECK_FALSE(same(residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, cfg).se, a.se));
}

TEST_CASE("bootstrap input errors") {
  const auto pl = planted(4, 6, 8, 14, 0.5);
  CHECK_THROWS_AS(residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, pl.z, config(1, 0)), ConfigError);
  CHECK_THROWS_AS(residual_bootstrap(pl.inst.data, pl.inst.dict, {}, pl.z, config(5, 0)), ConfigError);
  CHECK_THROWS_AS(residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, pl.z, config(5, 0, {})), ConfigError);
  const std::vector<std::size_t> partial(pl.support.begin(), pl.support.begin() + 1);
  CHECK_THROWS_AS(residual_bootstrap(pl.inst.data, pl.inst.dict, partial, pl.z, config(5, 0)), ConfigError);
}

TEST_CASE("property: t statistics carry the sign of the estimate and vanish off the support") {
  for (int c = 0; c < 100; ++c) {
    const auto pl = planted(3, 5, 6, 5000 + static_cast<std::uint64_t>(c), 0.3);
    ForwardModel model(pl.inst.data, pl.inst.dict);
    const auto z = l2_refit(model, pl.support, 1e-2).z;
    const auto res = residual_bootstrap(pl.inst.data, pl.inst.dict, pl.support, z, config(4, static_cast<std::uint64_t>(c)));
    for (std::size_t f = 0; f < z.size(); ++f) {
      const cplx t = res.t_stat[f];
      CHECK(t.real() * z[f].real() >= 0.0);
      CHECK(t.imag() * z[f].imag() >= 0.0);
      if (!std::binary_search(pl.support.begin(), pl.support.end(), f)) CHECK(t == cplx{});
      CHECK(res.se[f].real() >= 0.0);
      CHECK(res.se[f].imag() >= 0.0);
    }
  }
}

TEST_CASE("averaged absolute t on a hand-built result") {
  const auto dict = StftDictionary::build(16, 8, 4);
  InferenceResult r;
  r.estimate = CoefTensor(3, dict.size(), 2);
  r.t_stat = CoefTensor(3, dict.size(), 2);
  const std::size_t n0 = dict.n_windows();
  const std::size_t complex_cell = 1 * n0 + 2;  // h = 1, j = 2
  const std::size_t real_cell = 0 * n0 + 1;     // h = 0, j = 1
  REQUIRE_FALSE(dict.real_row(complex_cell));
  REQUIRE(dict.real_row(real_cell));
  r.estimate(0, complex_cell, 1) = cplx(1.0, -1.0);
  r.t_stat(0, complex_cell, 1) = cplx(2.0, -2.0);
  r.estimate(1, complex_cell, 1) = cplx(1.0, 1.0);
  r.t_stat(1, complex_cell, 1) = cplx(1.0, 3.0);
  r.estimate(0, real_cell, 1) = cplx(1.0, 0.0);
  r.t_stat(0, real_cell, 1) = cplx(3.0, 5.0);
  // Source 2 is outside the ROI; its t must not leak in.
  r.estimate(2, complex_cell, 1) = cplx(1.0, 0.0);
  r.t_stat(2, complex_cell, 1) = cplx(100.0, 0.0);

  const std::vector<std::size_t> roi{0, 1};
  const auto avg = averaged_absolute_t(r, dict, roi, 1);
  CHECK(avg.rows() == static_cast<Eigen::Index>(dict.n_freqs()));
  CHECK(avg.cols() == static_cast<Eigen::Index>(n0));
  CHECK(avg(1, 2) == doctest::Approx(2.0));
  CHECK(avg(0, 1) == doctest::Approx(3.0));
  CHECK(avg.sum() == doctest::Approx(5.0));
  CHECK(low_frequency_fraction(avg) == doctest::Approx(1.0));

  const auto intercept = averaged_absolute_t(r, dict, roi, 0);
  CHECK(intercept.sum() == 0.0);
  CHECK(low_frequency_fraction(intercept) == 0.0);
  CHECK_THROWS_AS(averaged_absolute_t(r, dict, std::vector<std::size_t>{}, 1), ConfigError);
  CHECK_THROWS_AS(averaged_absolute_t(r, dict, roi, 2), DimensionError);
}

TEST_CASE("low-frequency fraction") {
  RowMatrix a(4, 2);
  a << 1, 1, 1, 1, 1, 1, 3, 1;
  CHECK(low_frequency_fraction(a) == doctest::Approx(0.4));
  CHECK(low_frequency_fraction(a, 1) == doctest::Approx(0.2));
  CHECK(low_frequency_fraction(a, 10) == doctest::Approx(1.0));
}

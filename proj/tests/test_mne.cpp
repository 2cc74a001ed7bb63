#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stftr/errors.hpp"
#include "stftr/forward_model.hpp"
#include "stftr/mne.hpp"
#include "test_support.hpp"

using namespace stftr;
using namespace stftr::testing;

TEST_CASE("zero recordings give zero sources") {
  std::mt19937_64 gen(1);
  const RowMatrix G = random_matrix(gen, 5, 12);
  const RowMatrix M = RowMatrix::Zero(5, 16);
  CHECK(mne_solve_trial(M, G, 0.1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("orthonormal-row forward reduces to G^T M / (1 + lambda)") {
  std::mt19937_64 gen(2);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(gen, 12, 4)).householderQ();
  const RowMatrix G = Q.leftCols(4).transpose();
  const RowMatrix M = random_matrix(gen, 4, 10);
  const double lambda = 0.7;
  const RowMatrix S = mne_solve_trial(M, G, lambda);
  CHECK((S - G.transpose() * M / (1.0 + lambda)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("property: minimum-norm solve matches the dense regularized solution") {
  std::mt19937_64 gen(3);
  for (int c = 0; c < 100; ++c) {
    const auto n = static_cast<Eigen::Index>(3 + c % 5);
    const auto m = static_cast<Eigen::Index>(n + 2 + c % 7);
    const RowMatrix G = random_matrix(gen, n, m);
    const RowMatrix M = random_matrix(gen, n, 8);
    const double lambda = std::pow(10.0, -2.0 + 0.04 * c);
    const Eigen::MatrixXd Gd = G;
    // Primal form: (G^T G + lambda I)^{-1} G^T M.
    Eigen::MatrixXd N = Gd.transpose() * Gd;
    N.diagonal().array() += lambda;
    const Eigen::MatrixXd oracle = N.ldlt().solve(Gd.transpose() * Eigen::MatrixXd(M));
    const RowMatrix S = mne_solve_trial(M, G, lambda);
    CHECK((S - oracle).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("invertible forward and small lambda recover the sources") {
  std::mt19937_64 gen(4);
  const RowMatrix G = random_matrix(gen, 6, 6) + 6.0 * RowMatrix::Identity(6, 6);
  const RowMatrix S = random_matrix(gen, 6, 9);
  const RowMatrix est = mne_solve_trial(G * S, G, 1e-10);
  CHECK((est - S).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("minimum-norm solve is linear in the recordings") {
  std::mt19937_64 gen(5);
  const RowMatrix G = random_matrix(gen, 4, 9);
  const MneOperator op(G, 0.3);
  const RowMatrix A = random_matrix(gen, 4, 7), B = random_matrix(gen, 4, 7);
  CHECK((op.solve(2.0 * A - 3.0 * B) - (2.0 * op.solve(A) - 3.0 * op.solve(B))).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("source norm shrinks monotonically with lambda") {
  std::mt19937_64 gen(6);
  const RowMatrix G = random_matrix(gen, 5, 11);
  const RowMatrix M = random_matrix(gen, 5, 8);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
    const double norm = mne_solve_trial(M, G, lambda).norm();
    CHECK(norm < prev);
    prev = norm;
  }
}

TEST_CASE("mne input errors") {
  std::mt19937_64 gen(7);
  const RowMatrix G = random_matrix(gen, 4, 6);
  CHECK_THROWS_AS(MneOperator(G, 0.0), ConfigError);
  CHECK_THROWS_AS(MneOperator(G, 0.1).solve(RowMatrix::Zero(3, 5)), DimensionError);
  CHECK(mne_lambda_scale(G) == doctest::Approx(G.squaredNorm() / 4.0));
}

TEST_CASE("intercept-only regression returns the trial mean of the coefficients") {
  std::mt19937_64 gen(8);
  const auto dict = StftDictionary::build(16, 8, 4);
  std::vector<RowMatrix> sources;
  for (int r = 0; r < 5; ++r) sources.push_back(random_matrix(gen, 3, 16));
  const RowMatrix X = RowMatrix::Ones(5, 1);
  const auto reg = mne_regress(sources, dict, X);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < dict.size(); ++j) {
      cplx mean{};
      for (const auto& c : reg.trial_coefs) mean += c(i, j, 0);
      mean /= 5.0;
      CHECK(std::abs(reg.z(i, j, 0) - mean) <= 1e-12);
    }
}

TEST_CASE("property: per-coefficient regression matches a dense least-squares oracle") {
  std::mt19937_64 gen(9);
  const auto dict = StftDictionary::build(16, 8, 4);
  for (int c = 0; c < 100; ++c) {
    const std::size_t q = 5 + static_cast<std::size_t>(c % 6);
    const std::size_t p = 1 + static_cast<std::size_t>(c % 3);
    std::vector<RowMatrix> sources;
    for (std::size_t r = 0; r < q; ++r) sources.push_back(random_matrix(gen, 2, 16));
    const RowMatrix X = random_design(gen, q, p);
    const auto reg = mne_regress(sources, dict, X);
    const Eigen::MatrixXd Xd = X;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < dict.size(); ++j) {
        Eigen::VectorXcd y(static_cast<Eigen::Index>(q));
        for (std::size_t r = 0; r < q; ++r) {
          const auto coefs = dict.analyze(std::vector<double>(sources[r].row(static_cast<Eigen::Index>(i)).data(),
                                                              sources[r].row(static_cast<Eigen::Index>(i)).data() + 16));
          y(static_cast<Eigen::Index>(r)) = coefs[j];
        }
        const Eigen::VectorXcd beta = Xd.cast<cplx>().colPivHouseholderQr().solve(y);
        for (std::size_t k = 0; k < p; ++k) CHECK(std::abs(reg.z(i, j, k) - beta(static_cast<Eigen::Index>(k))) <= 1e-10);
        // Residuals are orthogonal to every design column.
        for (std::size_t k = 0; k < p; ++k) {
          cplx dot{};
          for (std::size_t r = 0; r < q; ++r)
            dot += X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * reg.residuals[r](i, j, 0);
          CHECK(std::abs(dot) <= 1e-10);
        }
      }
  }
}

TEST_CASE("mne fit equals the dense composition of inverse, analysis and regression") {
  const auto inst = make_instance(5, 7, 16, 8, 4, 6, 2, 10);
  const double lambda = 0.4;
  const auto fit = mne_fit(inst.data, inst.dict, lambda);
  const Eigen::MatrixXd Gd = inst.data.G;
  Eigen::MatrixXd K = Gd * Gd.transpose();
  K.diagonal().array() += lambda;
  const Eigen::MatrixXd W = Gd.transpose() * K.inverse();
  const Eigen::MatrixXcd analysis = inst.dict.dense().conjugate();  // s x T; rows are conj atoms
  const Eigen::MatrixXd Xd = inst.data.X;
  const Eigen::MatrixXd H = (Xd.transpose() * Xd).inverse() * Xd.transpose();
  for (std::size_t k = 0; k < 2; ++k) {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(7, static_cast<Eigen::Index>(inst.dict.size()));
    for (std::size_t r = 0; r < inst.data.q(); ++r) {
      const Eigen::MatrixXd S = W * Eigen::MatrixXd(inst.data.M[r]);
      acc += H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) * (S.cast<cplx>() * analysis.transpose());
    }
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < inst.dict.size(); ++j)
        CHECK(std::abs(fit.z(i, j, k) - acc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) <=
              1e-8 * std::max(1.0, acc.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("mne lambda selection returns a grid value and is thread independent") {
  const auto inst = make_instance(5, 9, 16, 8, 4, 6, 2, 11);
  const std::vector<double> grid{0.01, 0.1, 1.0, 10.0};
  const std::vector<std::size_t> folds{0, 1, 2, 0, 1, 2};
  const double a = select_mne_lambda(inst.data, inst.dict, grid, folds, 1);
  const double b = select_mne_lambda(inst.data, inst.dict, grid, folds, 3);
  CHECK(a == b);
  CHECK(std::find(grid.begin(), grid.end(), a) != grid.end());
  const std::vector<double> one{0.5};
  CHECK(select_mne_lambda(inst.data, inst.dict, one, folds) == 0.5);
  CHECK_THROWS_AS(select_mne_lambda(inst.data, inst.dict, std::vector<double>{}, folds), ConfigError);
}

TEST_CASE("mne bootstrap is reproducible and flags exact fits") {
  const auto inst = make_instance(5, 6, 16, 8, 4, 8, 2, 12);
  const auto fit = mne_fit(inst.data, inst.dict, 0.5);
  const auto a = mne_bootstrap(fit, inst.dict, inst.data.X, 10, 3, 1);
  const auto b = mne_bootstrap(fit, inst.dict, inst.data.X, 10, 3, 2);
  CHECK(a.method == "mne-r");
  CHECK(std::equal(a.se.values().begin(), a.se.values().end(), b.se.values().begin()));
  CHECK_FALSE(a.degenerate_se());
  CHECK_THROWS_AS(mne_bootstrap(fit, inst.dict, inst.data.X, 1, 3), ConfigError);

  // Sources that follow the design exactly leave zero residuals.
  std::mt19937_64 gen(13);
  const RowMatrix base = random_matrix(gen, 3, 16), slope = random_matrix(gen, 3, 16);
  std::vector<RowMatrix> sources;
  for (std::size_t r = 0; r < 8; ++r) sources.push_back(base + inst.data.X(static_cast<Eigen::Index>(r), 1) * slope);
  const auto exact = mne_regress(sources, inst.dict, inst.data.X);
  const auto res = mne_bootstrap(exact, inst.dict, inst.data.X, 6, 1);
  CHECK(res.degenerate_se());
}

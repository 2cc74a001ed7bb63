#include "stftr/refit_cv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"
#include "stftr/parallel.hpp"

namespace stftr {

void RefitConfig::validate() const {
  if (lambda2_grid.empty()) throw ConfigError("refit: lambda2 grid is empty");
  if (!std::is_sorted(lambda2_grid.begin(), lambda2_grid.end()))
    throw ConfigError("refit: lambda2 grid must be sorted ascending");
  for (double v : lambda2_grid)
    if (!(v >= 0.0)) throw ConfigError("refit: lambda2 values must be nonnegative");
  if (!(cg_tol > 0.0)) throw ConfigError("refit: cg_tol must be positive");
  if (cg_max_iter < 1) throw ConfigError("refit: cg_max_iter must be positive");
}

std::vector<std::size_t> support_of(const CoefTensor& z) { return z.support(); }

double ridge_objective(const ForwardModel& model, const CoefTensor& z, double lambda2) {
  return model.objective(z) + 0.5 * lambda2 * z.squared_norm();
}

double ridge_scale(const ForwardModel& model) { return model.lipschitz(model.all_rows()).raw; }

RefitResult l2_refit(const ForwardModel& model, std::span<const std::size_t> support, double lambda2,
                     const RefitConfig& config) {
  if (support.empty()) throw ConfigError("l2_refit: support is empty");
  if (!(lambda2 >= 0.0)) throw ConfigError("l2_refit: lambda2 must be nonnegative");
  const StftDictionary& dict = model.dictionary();
  const std::size_t s = model.s();
  const std::size_t p = model.p();
  const std::size_t total = model.m() * s * p;

  // Estimable real parameters as offsets into the interleaved (re, im) view.
  std::vector<std::size_t> params;
  std::vector<std::size_t> rows;
  for (std::size_t f : support) {
    if (f >= total) throw DimensionError("l2_refit: support index out of range");
    const std::size_t j = (f / p) % s;
    params.push_back(2 * f);
    if (!dict.real_row(j)) params.push_back(2 * f + 1);
    rows.push_back(f / (s * p));
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const std::size_t n = params.size();

  std::vector<double> atom_re_sq(s), atom_im_sq(s);
  for (std::size_t j = 0; j < s; ++j) {
    const auto a = dict.atom(j);
    atom_re_sq[j] = kernels::active().sum_sq(a.re, a.length);
    atom_im_sq[j] = kernels::active().sum_sq(a.im, a.length);
  }
  std::vector<double> inv_diag(n);
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t f = params[u] / 2;
    const std::size_t i = f / (s * p), j = (f / p) % s, k = f % p;
    const double atom = params[u] % 2 == 0 ? atom_re_sq[j] : atom_im_sq[j];
    const double d = model.gram_sources()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) *
                         model.gram_design()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) * atom +
                     lambda2;
    inv_diag[u] = d > 0.0 ? 1.0 / d : 1.0;
  }

  CoefTensor work = model.zeros();
  CoefTensor image = model.zeros();
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    auto w = work.reals();
    for (std::size_t u = 0; u < n; ++u) w[params[u]] = x[u];
    model.normal_apply(work, rows, rows, image);
    const auto im = image.reals();
    for (std::size_t u = 0; u < n; ++u) y[u] = im[params[u]] + lambda2 * x[u];
  };

  std::vector<double> b(n);
  const auto atb = model.correlation().reals();
  for (std::size_t u = 0; u < n; ++u) b[u] = atb[params[u]];
  const double b_norm = std::sqrt(kernels::active().sum_sq(b.data(), n));

  RefitResult out;
  out.z = model.zeros();
  if (b_norm == 0.0) {
    out.converged = true;
    return out;
  }
  const auto& kt = kernels::active();
  std::vector<double> x(n, 0.0), r = b, zv(n), dir(n), q(n);
  for (std::size_t u = 0; u < n; ++u) zv[u] = inv_diag[u] * r[u];
  dir = zv;
  double rz = kt.dot(r.data(), zv.data(), n);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (out.iterations = 1; out.iterations <= config.cg_max_iter; ++out.iterations) {
    apply(dir, q);
    const double dq = kt.dot(dir.data(), q.data(), n);
    if (!(dq > 0.0)) break;
    const double step = rz / dq;
    kt.axpy(step, dir.data(), x.data(), n);
    kt.axpy(-step, q.data(), r.data(), n);
    out.relative_residual = std::sqrt(kt.sum_sq(r.data(), n)) / b_norm;
    if (!std::isfinite(out.relative_residual)) throw NumericalError("l2_refit: non-finite CG residual");
    if (out.relative_residual <= config.cg_tol) {
      out.converged = true;
      break;
    }
    if (out.relative_residual < 0.999 * best) {
      best = out.relative_residual;
      since_best = 0;
    } else if (++since_best > 50) {
      break;  // stagnation
    }
    for (std::size_t u = 0; u < n; ++u) zv[u] = inv_diag[u] * r[u];
    const double rz_next = kt.dot(r.data(), zv.data(), n);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t u = 0; u < n; ++u) dir[u] = zv[u] + beta * dir[u];
  }
  out.iterations = std::min(out.iterations, config.cg_max_iter);
  auto zr = out.z.reals();
  for (std::size_t u = 0; u < n; ++u) zr[params[u]] = x[u];
  return out;
}

PenaltyScales penalty_scales(const ForwardModel& model, const GroupTree& tree) {
  const CoefTensor g = model.gradient(model.zeros());
  PenaltyScales sc;
  for (std::size_t i = 0; i < g.m(); ++i)
    for (std::size_t j = 0; j < g.s(); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < g.p(); ++k) sq += std::norm(g(i, j, k));
      sc.beta = std::max(sc.beta, std::sqrt(sq));
    }
  for (std::size_t l = 0; l < tree.n_groups(); ++l) {
    const double w = tree.groups[l].weight;
    if (!(w > 0.0)) continue;
    double sq = 0.0;
    for (std::size_t i : tree.groups[l].rows) sq += kernels::sum_sq(g.row_reals(i));
    sc.alpha = std::max(sc.alpha, std::sqrt(sq) / w);
  }
  return sc;
}

GammaPolicy parse_gamma_policy(std::string_view name) {
  if (name == "fixed-small") return GammaPolicy::fixed_small;
  if (name == "tuned") return GammaPolicy::tuned;
  throw ConfigError("unknown gamma policy '" + std::string(name) + "'");
}

CvPlan CvPlan::interleaved(std::size_t q, std::size_t n_folds) {
  CvPlan plan;
  plan.n_folds = n_folds;
  plan.fold_of_trial.resize(q);
  for (std::size_t r = 0; r < q; ++r) plan.fold_of_trial[r] = n_folds > 0 ? r % n_folds : 0;
  return plan;
}

void CvPlan::validate(std::size_t q) const {
  if (n_folds < 2) throw ConfigError("cv: at least two folds required");
  if (fold_of_trial.size() != q) throw ConfigError("cv: fold assignment does not cover every trial");
  std::vector<std::size_t> count(n_folds, 0);
  for (std::size_t f : fold_of_trial) {
    if (f >= n_folds) throw ConfigError("cv: fold index out of range");
    ++count[f];
  }
  for (std::size_t c : count)
    if (c == 0) throw ConfigError("cv: empty fold");
  auto check = [](const std::vector<double>& g, const char* name) {
    if (g.empty()) throw ConfigError(std::string("cv: empty ") + name + " grid");
    for (double v : g)
      if (!(v >= 0.0)) throw ConfigError(std::string("cv: negative value in ") + name + " grid");
  };
  check(alpha_grid, "alpha");
  check(beta_grid, "beta");
  check(lambda2_grid, "lambda2");
  if (gamma_policy == GammaPolicy::tuned) check(gamma_grid, "gamma");
}

double prediction_error(const CoefTensor& z, const TrialDataset& held_out, const StftDictionary& dict) {
  return 2.0 * objective(z, held_out, dict);
}

namespace {

struct Fold {
  TrialDataset train, test;
  bool degenerate = false;
};

std::vector<Fold> make_folds(const TrialDataset& data, std::span<const std::size_t> fold_of_trial,
                             std::size_t n_folds) {
  std::vector<Fold> folds(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < fold_of_trial.size(); ++r) (fold_of_trial[r] == f ? te : tr).push_back(r);
    folds[f].train = data.subset(tr);
    folds[f].test = data.subset(te);
    const RowMatrix& X = folds[f].train.X;
    for (Eigen::Index k = 1; k < X.cols(); ++k) {
      const double spread = X.col(k).maxCoeff() - X.col(k).minCoeff();
      if (!(spread > 1e-12 * std::max(1.0, X.col(k).cwiseAbs().maxCoeff()))) folds[f].degenerate = true;
    }
    if (tr.size() < 2) folds[f].degenerate = true;
  }
  return folds;
}

}  // namespace

double select_lambda2(const TrialDataset& data, const StftDictionary& dict, std::span<const std::size_t> support,
                      std::span<const double> grid, std::span<const std::size_t> fold_of_trial,
                      const RefitConfig& refit) {
  if (grid.empty()) throw ConfigError("select_lambda2: empty grid");
  if (grid.size() == 1 || support.empty()) return grid.front();
  const std::size_t n_folds = *std::max_element(fold_of_trial.begin(), fold_of_trial.end()) + 1;
  const auto folds = make_folds(data, fold_of_trial, n_folds);
  std::vector<double> total(grid.size(), 0.0);
  for (const auto& fold : folds) {
    if (fold.degenerate || fold.test.q() == 0) continue;
    ForwardModel model(fold.train, dict);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto fit = l2_refit(model, support, grid[g], refit);
      total[g] += prediction_error(fit.z, fold.test, dict);
    }
  }
  const auto best = std::min_element(total.begin(), total.end());
  return grid[static_cast<std::size_t>(best - total.begin())];
}

CvResult cross_validate(const TrialDataset& data, const StftDictionary& dict, const GroupTree& tree_template,
                        const CvPlan& plan, const SolverConfig& solver, const RefitConfig& refit,
                        std::size_t threads) {
  plan.validate(data.q());
  solver.validate();
  refit.validate();
  ForwardModel full(data, dict);
  const PenaltyScales scales = penalty_scales(full, tree_template);
  const double rscale = ridge_scale(full);

  struct Point {
    double alpha, beta, gamma;
  };
  std::vector<Point> points;
  const std::vector<double> gammas =
      plan.gamma_policy == GammaPolicy::tuned ? plan.gamma_grid : std::vector<double>{plan.gamma_fixed};
  for (double a : plan.alpha_grid)
    for (double b : plan.beta_grid)
      for (double c : gammas) points.push_back({a * scales.alpha, b * scales.beta, c * scales.beta});
  std::vector<double> lambdas;
  for (double l : plan.lambda2_grid) lambdas.push_back(l * rscale);

  const auto folds = make_folds(data, plan.fold_of_trial, plan.n_folds);
  CvResult result;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (folds[f].degenerate)
      result.warnings.push_back("cv: fold " + std::to_string(f) + " skipped (degenerate training design)");

  const std::size_t n_tasks = folds.size() * points.size();
  std::vector<std::vector<CvRow>> rows(n_tasks);
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    const std::size_t f = task / points.size();
    const Point& pt = points[task % points.size()];
    if (folds[f].degenerate) return;
    ForwardModel model(folds[f].train, dict);
    const GroupTree tree = tree_template.with_penalties(pt.alpha, pt.beta, pt.gamma);
    const auto l21 = active_set_solve(model, tree, solver, InitialActive::roi);
    const auto support = support_of(l21.z);
    for (double lam : lambdas) {
      CoefTensor z = support.empty() ? model.zeros() : l2_refit(model, support, lam, refit).z;
      rows[task].push_back({pt.alpha, pt.beta, pt.gamma, lam, f, prediction_error(z, folds[f].test, dict)});
    }
  });

  std::map<std::tuple<double, double, double, double>, double> totals;
  std::vector<std::tuple<double, double, double, double>> order;
  for (const auto& task_rows : rows)
    for (const auto& row : task_rows) {
      result.table.push_back(row);
      const auto key = std::make_tuple(row.alpha, row.beta, row.gamma, row.lambda2);
      if (!totals.count(key)) order.push_back(key);
      totals[key] += row.error;
    }
  if (order.empty()) throw ConfigError("cv: every fold was degenerate");
  result.best_error = std::numeric_limits<double>::infinity();
  for (const auto& key : order) {
    if (totals[key] < result.best_error) {
      result.best_error = totals[key];
      std::tie(result.alpha, result.beta, result.gamma, result.lambda2) = key;
    }
  }
  return result;
}

void write_cv_table(std::ostream& os, const std::vector<CvRow>& table) {
  const auto old = os.precision(17);
  os << "alpha,beta,gamma,lambda2,fold,error\n";
  for (const auto& r : table)
    os << r.alpha << ',' << r.beta << ',' << r.gamma << ',' << r.lambda2 << ',' << r.fold << ',' << r.error << '\n';
  os.precision(old);
}

}  // namespace stftr

#include "stftr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stftr/errors.hpp"
#include "stftr/kernels.hpp"

namespace stftr {

void SolverConfig::validate() const {
  if (!(tol_z > 0.0) || !(kkt_tol_rel > 0.0) || kkt_tol_abs < 0.0 || !(lipschitz_tol > 0.0) ||
      !(kkt_cd_tol > 0.0))
    throw ConfigError("solver: tolerances must be positive");
  if (active_batch < 1) throw ConfigError("solver: active_batch must be at least 1");
  if (max_fista_iter < 1 || max_outer_rounds < 1 || lipschitz_max_iter < 1 || kkt_max_sweeps < 1)
    throw ConfigError("solver: iteration limits must be positive");
}

double next_momentum(double zeta) noexcept { return 0.5 * (1.0 + std::sqrt(4.0 * zeta * zeta + 1.0)); }

double total_objective(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z) {
  return model.objective(z) + penalty_value(z, tree);
}

namespace {

std::vector<std::size_t> all_group_ids(const GroupTree& tree) {
  std::vector<std::size_t> ids(tree.n_groups());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

std::vector<std::size_t> normalized_ids(std::span<const std::size_t> ids, const GroupTree& tree) {
  std::vector<std::size_t> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (!out.empty() && out.back() >= tree.n_groups()) throw DimensionError("active set: group id out of range");
  return out;
}

double rows_sq_norm(const CoefTensor& z, std::span<const std::size_t> rows) {
  double acc = 0.0;
  for (std::size_t i : rows) acc += kernels::sum_sq(z.row_reals(i));
  return acc;
}

void project_ball(double* x, std::size_t n, double radius) {
  const double nrm = std::sqrt(kernels::active().sum_sq(x, n));
  if (nrm > radius) kernels::active().scale(radius / nrm, x, n);
}

struct SubtreeViolation {
  double violation = 0.0;
  bool converged = true;
  std::size_t sweeps = 0;
};

// Block coordinate descent on the multipliers of one first-level subtree.
// r holds grad f + sum_h D_h xi_h restricted to the subtree.
SubtreeViolation subtree_violation(const GroupTree& tree, std::size_t l, const CoefTensor& z0,
                                   const CoefTensor& grad, const SolverConfig& config) {
  const auto& rows = tree.groups[l].rows;
  const std::size_t s = z0.s();
  const std::size_t p = z0.p();
  const std::size_t row_len = 2 * s * p;
  const std::size_t n = rows.size() * row_len;
  std::vector<double> r(n);
  std::vector<double> zl(n);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto g = grad.row_reals(rows[a]);
    const auto z = z0.row_reals(rows[a]);
    std::copy(g.begin(), g.end(), r.begin() + static_cast<std::ptrdiff_t>(a * row_len));
    std::copy(z.begin(), z.end(), zl.begin() + static_cast<std::ptrdiff_t>(a * row_len));
  }

  // Free blocks (zero groups with positive lambda), as offsets into r.
  struct FreeBlock {
    std::size_t offset, length;
    double lambda;
  };
  std::vector<FreeBlock> free_blocks;
  const auto& kt = kernels::active();
  auto fix_or_free = [&](std::size_t offset, std::size_t length, double lambda) {
    if (!(lambda > 0.0)) return;
    const double nrm = std::sqrt(kt.sum_sq(zl.data() + offset, length));
    if (nrm > 0.0) {
      kt.axpy(lambda / nrm, zl.data() + offset, r.data() + offset, length);
    } else {
      free_blocks.push_back({offset, length, lambda});
    }
  };
  for (std::size_t e = 0; e < n / 2; ++e) fix_or_free(2 * e, 2, tree.gamma);
  for (std::size_t b = 0; b < n / (2 * p); ++b) fix_or_free(2 * p * b, 2 * p, tree.beta);
  fix_or_free(0, n, tree.level1_lambda(l));

  SubtreeViolation out;
  double current = 0.5 * kt.sum_sq(r.data(), n);
  if (free_blocks.empty() || current == 0.0) {
    out.violation = current;
    return out;
  }
  std::vector<std::size_t> xi_offset(free_blocks.size());
  std::size_t total = 0;
  for (std::size_t b = 0; b < free_blocks.size(); ++b) {
    xi_offset[b] = total;
    total += free_blocks[b].length;
  }
  std::vector<double> xi(total, 0.0);

  out.converged = false;
  for (out.sweeps = 1; out.sweeps <= config.kkt_max_sweeps; ++out.sweeps) {
    for (std::size_t b = 0; b < free_blocks.size(); ++b) {
      const FreeBlock& fb = free_blocks[b];
      double* rb = r.data() + fb.offset;
      double* xb = xi.data() + xi_offset[b];
      // v = r without this block's multiplier; new multiplier = P_ball(-v).
      for (std::size_t u = 0; u < fb.length; ++u) {
        rb[u] -= xb[u];
        xb[u] = -rb[u];
      }
      project_ball(xb, fb.length, fb.lambda);
      for (std::size_t u = 0; u < fb.length; ++u) rb[u] += xb[u];
    }
    const double next = 0.5 * kt.sum_sq(r.data(), n);
    const bool done = next == 0.0 || std::abs(current - next) <= config.kkt_cd_tol * std::max(current, next);
    current = next;
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, config.kkt_max_sweeps);
  out.violation = current;
  return out;
}

}  // namespace

KktReport kkt_violation_from_gradient(const GroupTree& tree, const CoefTensor& z0, const CoefTensor& grad,
                                     std::span<const std::size_t> active_groups, KktScope scope,
                                     const SolverConfig& config) {
  if (z0.m() != tree.m || z0.s() != tree.s || z0.p() != tree.p || !grad.same_shape(z0))
    throw DimensionError("kkt_violation: tensor shape mismatch");
  const auto active = normalized_ids(active_groups, tree);
  std::vector<bool> is_active(tree.n_groups(), false);
  for (std::size_t l : active) is_active[l] = true;

  KktReport report;
  for (std::size_t l = 0; l < tree.n_groups(); ++l) {
    if (scope == KktScope::nonactive && is_active[l]) continue;
    const SubtreeViolation v = subtree_violation(tree, l, z0, grad, config);
    report.total_violation += v.violation;
    report.multipliers_converged = report.multipliers_converged && v.converged;
    report.max_sweeps_used = std::max(report.max_sweeps_used, v.sweeps);
    if (!is_active[l]) report.per_group_violation[l] = v.violation;
  }
  return report;
}

KktReport kkt_violation(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z0,
                        std::span<const std::size_t> active_groups, KktScope scope, const SolverConfig& config) {
  if (z0.m() != tree.m || z0.s() != tree.s || z0.p() != tree.p || z0.m() != model.m())
    throw DimensionError("kkt_violation: tensor shape mismatch");
  const auto active = normalized_ids(active_groups, tree);
  std::vector<std::size_t> evaluated;
  {
    std::size_t a = 0;
    for (std::size_t l = 0; l < tree.n_groups(); ++l) {
      const bool act = a < active.size() && active[a] == l;
      if (act) ++a;
      if (scope == KktScope::all || !act) evaluated.push_back(l);
    }
  }
  CoefTensor grad = model.zeros();
  model.gradient(z0, z0.nonzero_rows(), tree.rows_of(evaluated), grad);
  return kkt_violation_from_gradient(tree, z0, grad, active, scope, config);
}

KktReport kkt_violation(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z0,
                        const SolverConfig& config) {
  return kkt_violation(model, tree, z0, {}, KktScope::all, config);
}

FistaResult fista(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                  const CoefTensor& z_init, std::span<const std::size_t> active_groups) {
  config.validate();
  if (!z_init.same_shape(model.zeros()) || tree.m != model.m() || tree.s != model.s() || tree.p != model.p())
    throw DimensionError("fista: tensor or group tree shape mismatch");
  const auto groups = normalized_ids(active_groups, tree);
  const auto rows = tree.rows_of(groups);
  {
    std::vector<bool> inside(model.m(), false);
    for (std::size_t i : rows) inside[i] = true;
    for (std::size_t i : z_init.nonzero_rows())
      if (!inside[i]) throw ConfigError("fista: initial iterate has support outside the active set");
  }

  FistaResult result;
  result.lipschitz = model.lipschitz(rows, config.lipschitz_tol, config.lipschitz_max_iter);
  FistaState st;
  st.z = z_init;
  st.lipschitz = result.lipschitz.value;
  if (rows.empty() || !(st.lipschitz > 0.0)) {
    // f is constant on the restricted space; the penalty alone is minimized at 0.
    st.z.set_zero();
    result.z = std::move(st.z);
    result.converged = true;
    result.objective_trace.push_back(total_objective(model, tree, result.z));
    return result;
  }
  st.y_aux = st.z;
  st.z_prev = st.z;
  CoefTensor grad = model.zeros();
  const double step = 1.0 / st.lipschitz;
  const auto& kt = kernels::active();
  const std::size_t row_len = 2 * st.z.row_size();

  for (st.iter = 1; st.iter <= config.max_fista_iter; ++st.iter) {
    for (std::size_t i : rows) std::copy(st.z.row(i).begin(), st.z.row(i).end(), st.z_prev.row(i).begin());
    model.gradient(st.y_aux, rows, rows, grad);
    for (std::size_t i : rows) {
      auto zr = st.z.row_reals(i);
      const auto yr = st.y_aux.row_reals(i);
      std::copy(yr.begin(), yr.end(), zr.begin());
      kt.axpy(-step, grad.row_reals(i).data(), zr.data(), row_len);
    }
    prox_inplace(st.z, tree, step, groups);

    double diff_sq = 0.0, against = 0.0;
    for (std::size_t i : rows) {
      const auto zr = st.z.row_reals(i);
      const auto pr = st.z_prev.row_reals(i);
      const auto yr = st.y_aux.row_reals(i);
      for (std::size_t u = 0; u < row_len; ++u) {
        const double d = zr[u] - pr[u];
        diff_sq += d * d;
        against += (yr[u] - zr[u]) * d;
      }
    }
    if (config.adaptive_restart && against > 0.0) st.zeta = 1.0;
    st.zeta_prev = st.zeta;
    st.zeta = next_momentum(st.zeta_prev);
    const double momentum = (st.zeta_prev - 1.0) / st.zeta;
    for (std::size_t i : rows) {
      const auto zr = st.z.row_reals(i);
      const auto pr = st.z_prev.row_reals(i);
      auto yr = st.y_aux.row_reals(i);
      for (std::size_t u = 0; u < row_len; ++u) yr[u] = zr[u] + momentum * (zr[u] - pr[u]);
    }
    const double prev_norm = std::sqrt(rows_sq_norm(st.z_prev, rows));
    result.relative_change = std::sqrt(diff_sq) / std::max(prev_norm, std::numeric_limits<double>::min());
    if (!std::isfinite(diff_sq))
      throw NumericalError("fista: non-finite iterate at iteration " + std::to_string(st.iter) +
                           " (Lipschitz constant " + std::to_string(st.lipschitz) + ")");
    if (config.trace_every > 0 && st.iter % config.trace_every == 0)
      st.objective_trace.push_back(total_objective(model, tree, st.z));
    if (result.relative_change < config.tol_z) {
      result.converged = true;
      break;
    }
  }
  result.iterations = std::min(st.iter, config.max_fista_iter);
  const double final_objective = total_objective(model, tree, st.z);
  if (!std::isfinite(final_objective)) throw NumericalError("fista: non-finite objective");
  st.objective_trace.push_back(final_objective);
  result.objective_trace = std::move(st.objective_trace);
  result.z = std::move(st.z);
  return result;
}

FistaResult fista(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                  const CoefTensor& z_init) {
  const auto ids = all_group_ids(tree);
  return fista(model, tree, config, z_init, ids);
}

InitialActive parse_initial_active(std::string_view name) {
  if (name == "roi") return InitialActive::roi;
  if (name == "empty") return InitialActive::empty;
  if (name == "all") return InitialActive::all;
  throw ConfigError("unknown initial active-set policy '" + std::string(name) + "'");
}

ActiveSetResult active_set_solve(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                                 InitialActive policy) {
  switch (policy) {
    case InitialActive::roi: return active_set_solve(model, tree, config, tree.roi_group_ids());
    case InitialActive::empty: return active_set_solve(model, tree, config, std::vector<std::size_t>{});
    case InitialActive::all: return active_set_solve(model, tree, config, all_group_ids(tree));
  }
  throw ConfigError("unknown initial active-set policy");
}

ActiveSetResult active_set_solve(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                                 std::vector<std::size_t> initial_groups) {
  config.validate();
  ActiveSetResult out;
  out.active_groups = normalized_ids(initial_groups, tree);
  out.z = model.zeros();

  out.baseline_violation = kkt_violation(model, tree, out.z, config).total_violation;
  out.kkt_tolerance = config.kkt_tol_abs > 0.0 ? config.kkt_tol_abs : config.kkt_tol_rel * out.baseline_violation;

  SolverConfig inner = config;
  constexpr double kMinTolZ = 1e-13;
  std::size_t fista_iterations = 0;
  double lipschitz = 0.0;
  double previous_objective = std::numeric_limits<double>::infinity();

  auto solve_restricted = [&]() {
    if (out.active_groups.empty()) return;
    // Larger J admits every previous iterate, so the restricted optimum can
    // only lower f + Omega; tighten FISTA when an inexact solve says otherwise.
    for (int attempt = 0;; ++attempt) {
      FistaResult fr = fista(model, tree, inner, out.z, out.active_groups);
      fista_iterations += fr.iterations;
      lipschitz = fr.lipschitz.value;
      out.fista_hit_max_iter = out.fista_hit_max_iter || !fr.converged;
      out.z = std::move(fr.z);
      const double obj = fr.objective_trace.back();
      if (obj <= previous_objective || attempt >= 3 || inner.tol_z <= kMinTolZ) break;
      inner.tol_z = std::max(inner.tol_z * 0.1, kMinTolZ);
    }
  };

  solve_restricted();
  for (std::size_t round = 0;; ++round) {
    out.kkt = kkt_violation(model, tree, out.z, out.active_groups, KktScope::all, config);
    const double obj = total_objective(model, tree, out.z);
    previous_objective = std::min(previous_objective, obj);
    out.trace.push_back({round, out.active_groups.size(), tree.rows_of(out.active_groups).size(),
                         out.kkt.total_violation, obj, fista_iterations, lipschitz, inner.tol_z});
    fista_iterations = 0;
    if (out.kkt.total_violation <= out.kkt_tolerance) {
      out.converged = true;
      break;
    }
    if (round + 1 >= config.max_outer_rounds) break;

    double outside = 0.0;
    std::vector<std::pair<double, std::size_t>> candidates;
    for (const auto& [l, v] : out.kkt.per_group_violation) {
      outside += v;
      if (v > 0.0) candidates.emplace_back(v, l);
    }
    const double inside = std::max(0.0, out.kkt.total_violation - outside);
    bool changed = false;
    if (outside > 0.5 * out.kkt_tolerance && !candidates.empty()) {
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      const std::size_t take = std::min(config.active_batch, candidates.size());
      for (std::size_t c = 0; c < take; ++c) out.active_groups.push_back(candidates[c].second);
      std::sort(out.active_groups.begin(), out.active_groups.end());
      changed = true;
    }
    if (inside > 0.5 * out.kkt_tolerance || !changed) {
      if (inner.tol_z <= kMinTolZ && !changed) break;
      inner.tol_z = std::max(inner.tol_z * 0.1, kMinTolZ);
    }
    solve_restricted();
  }
  return out;
}

}  // namespace stftr

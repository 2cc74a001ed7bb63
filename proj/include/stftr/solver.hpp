#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "stftr/forward_model.hpp"
#include "stftr/penalty.hpp"
#include "stftr/tensor.hpp"

namespace stftr {

struct SolverConfig {
  double tol_z = 1e-6;                 // relative change of z between iterations
  std::size_t max_fista_iter = 20000;
  double kkt_tol_rel = 1e-6;           // relative to the violation at z = 0
  double kkt_tol_abs = 0.0;            // when > 0, used instead of the relative form
  std::size_t active_batch = 50;       // first-level groups added per outer round
  std::size_t max_outer_rounds = 100;
  double lipschitz_tol = 1e-6;
  std::size_t lipschitz_max_iter = 1000;
  std::size_t kkt_max_sweeps = 20000;
  double kkt_cd_tol = 1e-10;
  std::size_t trace_every = 0;         // record f + Omega every N FISTA iterations (0: final only)
  bool adaptive_restart = true;        // reset momentum when it points against the last step

  void validate() const;
};

// FISTA iteration state with constant step 1/L.
struct FistaState {
  CoefTensor z, z_prev, y_aux;
  double zeta = 1.0, zeta_prev = 1.0;
  double lipschitz = 0.0;
  std::size_t iter = 0;
  std::vector<double> objective_trace;
};

// Momentum update zeta <- (1 + sqrt(4 zeta^2 + 1)) / 2.
double next_momentum(double zeta) noexcept;

struct FistaResult {
  CoefTensor z;
  std::size_t iterations = 0;
  bool converged = false;  // false: max_fista_iter reached
  double relative_change = 0.0;
  LipschitzEstimate lipschitz;
  std::vector<double> objective_trace;
};

// FISTA restricted to the listed first-level groups (z_init must be zero
// elsewhere). The Lipschitz constant is computed on the restricted operator.
// Throws NumericalError when an iterate becomes non-finite.
FistaResult fista(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                  const CoefTensor& z_init, std::span<const std::size_t> active_groups);
FistaResult fista(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                  const CoefTensor& z_init);

enum class KktScope { all, nonactive };

struct KktReport {
  double total_violation = 0.0;
  // 1/2 ||(grad f + sum_h D_h xi_h)|A_l||^2 for first-level groups outside
  // the active set.
  std::map<std::size_t, double> per_group_violation;
  bool multipliers_converged = true;
  std::size_t max_sweeps_used = 0;
};

// Minimum over feasible multipliers of 1/2 ||grad f(z0) + sum_h D_h xi_h||^2,
// with xi_h = lambda_h z0|g_h / ||z0|g_h|| on nonzero groups and
// ||xi_h|| <= lambda_h on zero groups. The problem separates over first-level
// subtrees; each is solved by block coordinate descent, innermost groups first.
KktReport kkt_violation(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z0,
                        std::span<const std::size_t> active_groups, KktScope scope, const SolverConfig& config);
KktReport kkt_violation(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z0,
                        const SolverConfig& config = {});
// Same measure for an explicitly supplied gradient of the smooth term.
KktReport kkt_violation_from_gradient(const GroupTree& tree, const CoefTensor& z0, const CoefTensor& grad,
                                     std::span<const std::size_t> active_groups, KktScope scope,
                                     const SolverConfig& config = {});

enum class InitialActive { roi, empty, all };
InitialActive parse_initial_active(std::string_view name);

struct RoundTrace {
  std::size_t round = 0;
  std::size_t active_groups = 0;
  std::size_t active_rows = 0;
  double violation = 0.0;
  double objective = 0.0;  // f + Omega
  std::size_t fista_iterations = 0;
  double lipschitz = 0.0;
  double tol_z = 0.0;
};

struct ActiveSetResult {
  CoefTensor z;
  KktReport kkt;
  std::vector<RoundTrace> trace;
  std::vector<std::size_t> active_groups;
  double kkt_tolerance = 0.0;
  double baseline_violation = 0.0;  // at z = 0
  bool converged = false;
  bool fista_hit_max_iter = false;
};

ActiveSetResult active_set_solve(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                                 std::vector<std::size_t> initial_groups);
ActiveSetResult active_set_solve(const ForwardModel& model, const GroupTree& tree, const SolverConfig& config,
                                 InitialActive policy = InitialActive::roi);

// f(z) + Omega(z).
double total_objective(const ForwardModel& model, const GroupTree& tree, const CoefTensor& z);

}  // namespace stftr

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "itrack/factor_targets.hpp"
#include "itrack/simplex.hpp"

namespace itrack {

// Weights at or below this count as absent when validating cardinality.
inline constexpr double kInclusionThreshold = 1e-9;

// Partial-replication instance over S = S_{t_n} united with S_{t_n-1}.
// Instruments are kept in id order.
struct MilpProblem {
  std::string date;
  std::vector<std::string> ids;
  std::vector<double> prior;      // index weight at t_n-1, 0 if absent then
  std::vector<char> current;      // member of S_{t_n}
  std::vector<char> excluded;     // S*: weight pinned to prior
  std::vector<double> alpha;      // predicted, NaN where not predicted
  std::vector<double> beta;
  std::vector<double> max_weight;  // per-instrument caps, empty when unused
  std::size_t n_star = 0;
  double alpha_target = 0.0;
  double beta_target = 0.0;
  double equality_band = 0.0;  // 0 keeps both factor constraints exact

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t excluded_count() const;
  void validate() const;  // throws ModelingError

  // Column layout: w (n), u (n), z (n), Z.
  std::size_t w_col(std::size_t i) const { return i; }
  std::size_t u_col(std::size_t i) const { return size() + i; }
  std::size_t z_col(std::size_t i) const { return 2 * size() + i; }
  std::size_t big_z_col() const { return 3 * size(); }

  // Row layout: w-z <= prior (n), -w-z <= -prior (n), z-Z <= 0 (n), beta,
  // alpha, budget, w-u <= 0 (n), sum u <= N*. Relaxation has u in [0, 1].
  LinearProgram relaxation() const;
  std::vector<std::string> row_names() const;
  std::size_t beta_row() const { return 3 * size(); }
  std::size_t alpha_row() const { return 3 * size() + 1; }
  std::size_t budget_row() const { return 3 * size() + 2; }
  std::size_t cardinality_row() const { return 4 * size() + 3; }
};

struct BuildInputs {
  std::string date;
  std::map<std::string, FactorEstimate> predictions;
  std::map<std::string, double> prior_weights;  // w^m at t_n-1
  std::set<std::string> universe;               // S_{t_n}
  std::set<std::string> exclusions;             // S*
  std::size_t n_star = 0;
  std::map<std::string, double> max_weight;
  double equality_band = 0.0;
};

// Targets sum prior weight times prediction over predicted instruments of
// S minus S*. Instruments leaving the index at t_n are held at weight 0.
// Throws ModelingError naming a current, non-excluded instrument without a
// prediction.
MilpProblem build_problem(const BuildInputs& in);

enum class SolveStatus { optimal, node_limit, time_limit, infeasible };
std::string to_string(SolveStatus s);

struct SolveOptions {
  double time_limit_seconds = 60.0;
  std::size_t node_limit = 0;  // 0 means unlimited
  double gap_tolerance = 1e-10;
  SimplexOptions simplex{};
};

struct SolverStats {
  std::size_t nodes = 0;
  std::size_t lp_iterations = 0;
  double root_bound = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;
};

struct MilpSolution {
  SolveStatus status = SolveStatus::infeasible;
  std::vector<std::string> ids;
  std::vector<double> weights;
  std::vector<char> included;
  std::vector<double> z;
  double big_z = 0.0;
  double objective = 0.0;
  SolverStats stats;
  std::string infeasibility;  // names the conflicting constraints when infeasible

  std::size_t support() const;
};

// Branch-and-bound on u with bounded-simplex relaxations, best-bound node
// order, most-fractional branching and a rounding incumbent from the root.
// Infeasible instances return status infeasible with a report; a limit with
// no incumbent throws ModelingError.
MilpSolution solve(const MilpProblem& problem, const SolveOptions& options = {});

// Lagged full replication: the prior weights verbatim.
MilpSolution full_replication(const MilpProblem& problem);

// Which pair of the beta equality, alpha equality and cardinality constraint
// is jointly unattainable. Empty when none of the pairs alone conflicts.
std::string diagnose_infeasibility(const MilpProblem& problem, const SolveOptions& options = {});

// Largest violation of the solution against the problem's constraints.
struct SolutionCheck {
  double budget = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double binding = 0.0;  // z vs |w - prior| and Z vs max z
  double pinned = 0.0;   // S* deviation
  double negative = 0.0;
  std::size_t support = 0;
};
SolutionCheck check_solution(const MilpProblem& problem, const MilpSolution& solution);

void save_problem_json(const MilpProblem& problem, const std::filesystem::path& path);
MilpProblem load_problem_json(const std::filesystem::path& path);
void save_solution_json(const MilpSolution& solution, const std::filesystem::path& path);

}  // namespace itrack

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <vector>

namespace itrack {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// minimize c'x  subject to  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi.
// Equality rows have row_lo == row_hi. Bounds may be infinite.
struct LinearProgram {
  Eigen::MatrixXd a;
  std::vector<double> c;
  std::vector<double> row_lo, row_hi;
  std::vector<double> col_lo, col_hi;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(a.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(a.cols()); }
  void validate() const;  // throws ShapeError
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct SimplexOptions {
  double pivot_tolerance = 1e-10;
  double feasibility_tolerance = 1e-9;
  double optimality_tolerance = 1e-9;
  std::size_t max_iterations = 200000;
  std::size_t degenerate_before_bland = 50;
};

// Dense-tableau bounded-variable primal simplex. Each row r carries a logical
// variable s_r = A_r x bounded by [row_lo, row_hi], so the working system is
// [A  -I] (x, s) = 0. Infeasible starts are handled by a composite phase one
// that minimizes the sum of bound violations of basic variables.
//
// A solver instance keeps its tableau, so bounds can be changed and the
// problem re-solved from the last basis (used by branch-and-bound).
class BoundedSimplex {
 public:
  BoundedSimplex(const LinearProgram& lp, SimplexOptions options = {});

  LpStatus solve();

  // Change the bounds of structural column j. The current basis is kept.
  void set_column_bounds(std::size_t j, double lo, double hi);

  // Recompute basic values by factorizing the basis of the original matrix.
  void refine();

  double objective() const;
  std::vector<double> primal() const;  // structural values
  std::vector<double> row_activity() const;
  std::size_t iterations() const noexcept { return iterations_; }
  LpStatus status() const noexcept { return status_; }
  std::size_t rows() const noexcept { return m_; }
  std::size_t cols() const noexcept { return n_; }

 private:
  enum class At : unsigned char { basic, lower, upper, zero };

  using Tableau = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void recompute_basics();
  void pivot(std::size_t row, std::size_t col);

  const LinearProgram* lp_;
  SimplexOptions opt_;
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  Tableau tab_;                  // B^{-1} [A  -I], m x (n + m)
  std::vector<double> lo_, hi_;  // bounds of all n + m variables
  std::vector<double> cost_;     // phase-two cost, n + m
  std::vector<double> x_;        // values of all variables
  std::vector<std::size_t> basis_;  // variable basic in each row
  std::vector<At> at_;
  std::size_t iterations_ = 0;
  LpStatus status_ = LpStatus::iteration_limit;
};

}  // namespace itrack

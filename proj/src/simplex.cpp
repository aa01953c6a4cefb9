#include "itrack/simplex.hpp"

#include <cmath>
#include <string>

#include "itrack/errors.hpp"

namespace itrack {

void LinearProgram::validate() const {
  const std::size_t m = rows(), n = cols();
  if (c.size() != n || col_lo.size() != n || col_hi.size() != n) {
    throw ShapeError("linear program column data does not match " + std::to_string(n) + " columns");
  }
  if (row_lo.size() != m || row_hi.size() != m) {
    throw ShapeError("linear program row bounds do not match " + std::to_string(m) + " rows");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (col_lo[j] > col_hi[j]) throw ShapeError("column " + std::to_string(j) + " has crossed bounds");
  }
  for (std::size_t r = 0; r < m; ++r) {
    if (row_lo[r] > row_hi[r]) throw ShapeError("row " + std::to_string(r) + " has crossed bounds");
  }
}

BoundedSimplex::BoundedSimplex(const LinearProgram& lp, SimplexOptions options)
    : lp_(&lp), opt_(options), m_(lp.rows()), n_(lp.cols()) {
  lp.validate();
  const std::size_t total = n_ + m_;
  tab_.resize(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(total));
  tab_.leftCols(static_cast<Eigen::Index>(n_)) = -lp.a;
  tab_.rightCols(static_cast<Eigen::Index>(m_)).setIdentity();

  lo_.resize(total);
  hi_.resize(total);
  cost_.assign(total, 0.0);
  x_.assign(total, 0.0);
  at_.resize(total);
  basis_.resize(m_);
  for (std::size_t j = 0; j < n_; ++j) {
    lo_[j] = lp.col_lo[j];
    hi_[j] = lp.col_hi[j];
    cost_[j] = lp.c[j];
    if (std::isfinite(lo_[j])) {
      at_[j] = At::lower;
      x_[j] = lo_[j];
    } else if (std::isfinite(hi_[j])) {
      at_[j] = At::upper;
      x_[j] = hi_[j];
    } else {
      at_[j] = At::zero;
    }
  }
  for (std::size_t r = 0; r < m_; ++r) {
    lo_[n_ + r] = lp.row_lo[r];
    hi_[n_ + r] = lp.row_hi[r];
    basis_[r] = n_ + r;
    at_[n_ + r] = At::basic;
  }
  recompute_basics();
}

void BoundedSimplex::recompute_basics() {
  Eigen::VectorXd xn = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_ + m_));
  for (std::size_t k = 0; k < n_ + m_; ++k) {
    if (at_[k] != At::basic) xn(static_cast<Eigen::Index>(k)) = x_[k];
  }
  const Eigen::VectorXd xb = -(tab_ * xn);
  for (std::size_t r = 0; r < m_; ++r) x_[basis_[r]] = xb(static_cast<Eigen::Index>(r));
}

void BoundedSimplex::pivot(std::size_t row, std::size_t col) {
  const auto r = static_cast<Eigen::Index>(row);
  const auto j = static_cast<Eigen::Index>(col);
  tab_.row(r) /= tab_(r, j);
  const Eigen::RowVectorXd prow = tab_.row(r);
  for (Eigen::Index i = 0; i < tab_.rows(); ++i) {
    if (i == r) continue;
    const double f = tab_(i, j);
    if (f != 0.0) tab_.row(i) -= f * prow;
  }
  tab_.col(j).setZero();
  tab_(r, j) = 1.0;
}

void BoundedSimplex::set_column_bounds(std::size_t j, double lo, double hi) {
  if (j >= n_) throw ShapeError("column " + std::to_string(j) + " out of range");
  if (lo > hi) throw ShapeError("column " + std::to_string(j) + " given crossed bounds");
  lo_[j] = lo;
  hi_[j] = hi;
  if (at_[j] == At::basic) return;
  const double old = x_[j];
  if (at_[j] == At::upper && std::isfinite(hi)) {
    x_[j] = hi;
  } else if (std::isfinite(lo)) {
    at_[j] = At::lower;
    x_[j] = lo;
  } else if (std::isfinite(hi)) {
    at_[j] = At::upper;
    x_[j] = hi;
  } else {
    at_[j] = At::zero;
    x_[j] = 0.0;
  }
  const double delta = x_[j] - old;
  if (delta != 0.0) {
    for (std::size_t r = 0; r < m_; ++r) {
      x_[basis_[r]] -= tab_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * delta;
    }
  }
}

LpStatus BoundedSimplex::solve() {
  const std::size_t total = n_ + m_;
  const double ftol = opt_.feasibility_tolerance;
  const double otol = opt_.optimality_tolerance;
  const double ptol = opt_.pivot_tolerance;
  std::size_t degenerate = 0;
  std::size_t since_recompute = 0;
  Eigen::VectorXd d(static_cast<Eigen::Index>(total));

  for (;;) {
    if (iterations_ >= opt_.max_iterations) return status_ = LpStatus::iteration_limit;

    // Basic costs: violation gradient in phase one, objective in phase two.
    bool phase1 = false;
    for (std::size_t r = 0; r < m_; ++r) {
      const std::size_t k = basis_[r];
      if (x_[k] < lo_[k] - ftol || x_[k] > hi_[k] + ftol) {
        phase1 = true;
        break;
      }
    }
    d.setZero();
    if (!phase1) {
      for (std::size_t j = 0; j < total; ++j) d(static_cast<Eigen::Index>(j)) = cost_[j];
    }
    for (std::size_t r = 0; r < m_; ++r) {
      const std::size_t k = basis_[r];
      double cb = 0.0;
      if (phase1) {
        if (x_[k] < lo_[k] - ftol) cb = -1.0;
        else if (x_[k] > hi_[k] + ftol) cb = 1.0;
      } else {
        cb = cost_[k];
      }
      if (cb != 0.0) d -= cb * tab_.row(static_cast<Eigen::Index>(r)).transpose();
    }

    const bool bland = degenerate > opt_.degenerate_before_bland;
    std::size_t enter = total;
    double best = 0.0;
    double dir = 0.0;
    for (std::size_t j = 0; j < total; ++j) {
      if (at_[j] == At::basic || lo_[j] == hi_[j]) continue;
      const double dj = d(static_cast<Eigen::Index>(j));
      double s = 0.0;
      if ((at_[j] == At::lower || at_[j] == At::zero) && dj < -otol) s = 1.0;
      else if ((at_[j] == At::upper || at_[j] == At::zero) && dj > otol) s = -1.0;
      if (s == 0.0) continue;
      if (bland) {
        enter = j;
        dir = s;
        break;
      }
      if (std::abs(dj) > best) {
        best = std::abs(dj);
        enter = j;
        dir = s;
      }
    }
    if (enter == total) {
      if (phase1) return status_ = LpStatus::infeasible;
      recompute_basics();
      return status_ = LpStatus::optimal;
    }

    // Ratio test. Basic r moves by theta * delta_r.
    const auto je = static_cast<Eigen::Index>(enter);
    double theta = hi_[enter] - lo_[enter];  // bound flip
    std::size_t leave_row = m_;
    bool leave_to_upper = false;
    double leave_pivot = 0.0;
    for (std::size_t r = 0; r < m_; ++r) {
      const double t = tab_(static_cast<Eigen::Index>(r), je);
      if (std::abs(t) < ptol) continue;
      const double delta = -dir * t;
      const std::size_t k = basis_[r];
      const double xv = x_[k];
      double limit = kInf;
      bool to_upper = false;
      if (delta > 0.0) {
        if (xv < lo_[k] - ftol) {
          limit = (lo_[k] - xv) / delta;
        } else if (std::isfinite(hi_[k]) && xv <= hi_[k] + ftol) {
          limit = std::max(0.0, hi_[k] - xv) / delta;
          to_upper = true;
        }
      } else {
        if (xv > hi_[k] + ftol) {
          limit = (xv - hi_[k]) / -delta;
          to_upper = true;
        } else if (std::isfinite(lo_[k]) && xv >= lo_[k] - ftol) {
          limit = std::max(0.0, xv - lo_[k]) / -delta;
        }
      }
      if (!std::isfinite(limit)) continue;
      bool take = false;
      if (limit < theta - 1e-12) {
        take = true;
      } else if (limit <= theta + 1e-12 && leave_row < m_) {
        take = bland ? basis_[r] < basis_[leave_row] : std::abs(t) > std::abs(leave_pivot);
      }
      if (take) {
        theta = limit;
        leave_row = r;
        leave_to_upper = to_upper;
        leave_pivot = t;
      }
    }
    if (!std::isfinite(theta)) {
      return status_ = phase1 ? LpStatus::infeasible : LpStatus::unbounded;
    }

    ++iterations_;
    degenerate = theta <= 1e-12 ? degenerate + 1 : 0;
    if (theta != 0.0) {
      for (std::size_t r = 0; r < m_; ++r) {
        const double t = tab_(static_cast<Eigen::Index>(r), je);
        if (t != 0.0) x_[basis_[r]] -= dir * theta * t;
      }
    }
    if (leave_row == m_) {
      at_[enter] = dir > 0.0 ? At::upper : At::lower;
      x_[enter] = dir > 0.0 ? hi_[enter] : lo_[enter];
      continue;
    }
    x_[enter] += dir * theta;
    const std::size_t k = basis_[leave_row];
    at_[k] = leave_to_upper ? At::upper : At::lower;
    x_[k] = leave_to_upper ? hi_[k] : lo_[k];
    pivot(leave_row, enter);
    basis_[leave_row] = enter;
    at_[enter] = At::basic;
    if (++since_recompute >= 100) {
      recompute_basics();
      since_recompute = 0;
    }
  }
}

void BoundedSimplex::refine() {
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd b(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  auto column = [&](std::size_t k) -> Eigen::VectorXd {
    if (k < n_) return lp_->a.col(static_cast<Eigen::Index>(k));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e(static_cast<Eigen::Index>(k - n_)) = -1.0;
    return e;
  };
  for (std::size_t r = 0; r < m_; ++r) b.col(static_cast<Eigen::Index>(r)) = column(basis_[r]);
  for (std::size_t k = 0; k < n_ + m_; ++k) {
    if (at_[k] == At::basic || x_[k] == 0.0) continue;
    rhs -= column(k) * x_[k];
  }
  const Eigen::VectorXd xb = b.partialPivLu().solve(rhs);
  for (std::size_t r = 0; r < m_; ++r) x_[basis_[r]] = xb(static_cast<Eigen::Index>(r));
}

double BoundedSimplex::objective() const {
  double v = 0.0;
  for (std::size_t j = 0; j < n_; ++j) v += cost_[j] * x_[j];
  return v;
}

std::vector<double> BoundedSimplex::primal() const {
  return std::vector<double>(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
}

std::vector<double> BoundedSimplex::row_activity() const {
  const auto x = primal();
  Eigen::VectorXd xv(static_cast<Eigen::Index>(n_));
  std::copy(x.begin(), x.end(), xv.data());
  const Eigen::VectorXd act = lp_->a * xv;
  return std::vector<double>(act.data(), act.data() + act.size());
}

}  // namespace itrack

#pragma once

// Dense two-phase simplex with Bland's rule. Sized for the admissibility
// programs (tens of variables), not for general use.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gaplab::detail {

enum class Relation { LessEqual, Equal, GreaterEqual };
enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LinearProgram {
  std::vector<double> objective;  // minimize objective . x, x >= 0
  std::vector<std::vector<double>> rows;
  std::vector<Relation> relations;
  std::vector<double> rhs;

  void add_row(std::vector<double> row, Relation rel, double b) {
    rows.push_back(std::move(row));
    relations.push_back(rel);
    rhs.push_back(b);
  }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x;
};

namespace simplex_impl {

struct Tableau {
  std::size_t m, width;  // width = columns + 1 (rhs last)
  std::vector<double> a;  // (m + 1) x width, objective row last
  std::vector<std::size_t> basis;

  double& at(std::size_t r, std::size_t c) { return a[r * width + c]; }
  double rhs(std::size_t r) const { return a[r * width + width - 1]; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double piv = at(pr, pc);
    for (std::size_t c = 0; c < width; ++c) at(pr, c) /= piv;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) at(r, c) -= f * at(pr, c);
    }
    basis[pr] = pc;
  }

  // Returns false when unbounded. `allowed` masks columns that may enter.
  bool optimize(const std::vector<bool>& allowed, double eps) {
    for (std::size_t iter = 0; iter < 100000; ++iter) {
      std::size_t enter = width;
      for (std::size_t c = 0; c + 1 < width; ++c) {
        if (allowed[c] && at(m, c) < -eps) { enter = c; break; }
      }
      if (enter == width) return true;
      std::size_t leave = m;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m; ++r) {
        const double v = at(r, enter);
        if (v > eps) {
          const double ratio = rhs(r) / v;
          if (ratio < best - eps || (ratio <= best + eps && (leave == m || basis[r] < basis[leave]))) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave == m) return false;
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex: iteration cap reached");
  }
};

}  // namespace simplex_impl

inline LpSolution solve_lp(const LinearProgram& lp, double eps = 1e-12) {
  const std::size_t n = lp.objective.size();
  const std::size_t m = lp.rows.size();
  std::size_t n_slack = 0, n_art = 0;
  for (auto rel : lp.relations) {
    if (rel != Relation::Equal) ++n_slack;
  }
  // Normalize to nonnegative right-hand sides.
  std::vector<std::vector<double>> rows = lp.rows;
  std::vector<Relation> rel = lp.relations;
  std::vector<double> b = lp.rhs;
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].size() != n) throw std::invalid_argument("simplex: row width mismatch");
    if (b[i] < 0) {
      for (auto& v : rows[i]) v = -v;
      b[i] = -b[i];
      if (rel[i] == Relation::LessEqual) rel[i] = Relation::GreaterEqual;
      else if (rel[i] == Relation::GreaterEqual) rel[i] = Relation::LessEqual;
    }
    if (rel[i] != Relation::LessEqual) ++n_art;
  }
  const std::size_t cols = n + n_slack + n_art;
  simplex_impl::Tableau t{m, cols + 1, std::vector<double>((m + 1) * (cols + 1), 0.0),
                          std::vector<std::size_t>(m)};
  std::size_t slack = n, art = n + n_slack;
  std::vector<bool> is_art(cols, false);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) = rows[i][j];
    t.at(i, cols) = b[i];
    switch (rel[i]) {
      case Relation::LessEqual:
        t.at(i, slack) = 1.0;
        t.basis[i] = slack++;
        break;
      case Relation::GreaterEqual:
        t.at(i, slack++) = -1.0;
        [[fallthrough]];
      case Relation::Equal:
        t.at(i, art) = 1.0;
        is_art[art] = true;
        t.basis[i] = art++;
        break;
    }
  }

  std::vector<bool> allowed(cols, true);
  if (n_art > 0) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!is_art[t.basis[i]]) continue;
      for (std::size_t c = 0; c <= cols; ++c) t.at(m, c) -= t.at(i, c);
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_art[c]) t.at(m, c) = 0.0;
    }
    t.optimize(allowed, eps);
    if (-t.at(m, cols) > 1e-9) return {LpStatus::Infeasible, std::numeric_limits<double>::quiet_NaN(), {}};
    for (std::size_t i = 0; i < m; ++i) {
      if (!is_art[t.basis[i]]) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!is_art[c] && std::abs(t.at(i, c)) > 1e-9) {
          t.pivot(i, c);
          break;
        }
      }
    }
    for (std::size_t c = 0; c < cols; ++c) allowed[c] = !is_art[c];
  }

  for (std::size_t c = 0; c <= cols; ++c) t.at(m, c) = c < n ? lp.objective[c] : 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = t.at(m, t.basis[i]);
    if (f == 0.0) continue;
    for (std::size_t c = 0; c <= cols; ++c) t.at(m, c) -= f * t.at(i, c);
  }
  if (!t.optimize(allowed, eps)) return {LpStatus::Unbounded, -std::numeric_limits<double>::infinity(), {}};

  LpSolution sol{LpStatus::Optimal, -t.at(m, cols), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < m; ++i) {
    if (t.basis[i] < n) sol.x[t.basis[i]] = t.rhs(i);
  }
  return sol;
}

}  // namespace gaplab::detail

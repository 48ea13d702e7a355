#include "cqz/lp.hpp"

#include <gmpxx.h>

#include <cmath>
#include <limits>

#include "cqz/error.hpp"

namespace cqz {

void LpProblem::add_row(RowKind k, std::vector<double> a, double b) {
    CQZ_CHECK(a.size() == nvars, "lp row width mismatch");
    rows.push_back(std::move(a));
    kinds.push_back(k);
    rhs.push_back(b);
}

namespace {

/* Scalar adapters so one tableau serves both paths. The double path treats
 * anything within eps as zero; the rational path compares exactly. */
struct DoubleOps {
    using T = double;
    static constexpr double eps = 1e-9;
    static T from(double v) { return v; }
    static double to(const T& v) { return v; }
    static bool pos(const T& v) { return v > eps; }
    static bool neg(const T& v) { return v < -eps; }
    static bool tiny_pivot(const T& v) { return std::fabs(v) < 1e-12; }
};

struct RatOps {
    using T = mpq_class;
    static T from(double v) { return mpq_class(v); }  // exact
    static double to(const T& v) { return v.get_d(); }
    static bool pos(const T& v) { return sgn(v) > 0; }
    static bool neg(const T& v) { return sgn(v) < 0; }
    static bool tiny_pivot(const T&) { return false; }
};

struct BailOut {};  // double path met a tiny pivot; retry exactly

/* Standard two-phase tableau. Columns: structural, then one slack/surplus
 * per inequality, then artificials. rhs kept non-negative throughout. */
template <typename Ops>
class Simplex {
    using T = typename Ops::T;

public:
    explicit Simplex(const LpProblem& p) : p_(p) {
        size_t m = p.rows.size();
        nslack_ = 0;
        for (RowKind k : p.kinds)
            if (k != RowKind::eq) ++nslack_;
        nart_ = 0;
        ncols_ = p.nvars + nslack_;  // artificials appended below
        a_.assign(m, {});
        b_.assign(m, T(0));
        basis_.assign(m, 0);

        size_t slack_at = p.nvars;
        std::vector<size_t> need_art;
        for (size_t i = 0; i < m; ++i) {
            a_[i].assign(ncols_, T(0));
            bool flip = p.rhs[i] < 0;
            for (uint32_t j = 0; j < p.nvars; ++j) {
                T v = Ops::from(p.rows[i][j]);
                a_[i][j] = flip ? T(-v) : v;
            }
            b_[i] = Ops::from(flip ? -p.rhs[i] : p.rhs[i]);
            RowKind k = p.kinds[i];
            if (k != RowKind::eq) {
                /* <= gains +1 slack, >= gains -1 surplus; flipping the row
                 * swaps the roles. */
                bool plus = (k == RowKind::le) != flip;
                a_[i][slack_at] = T(plus ? 1 : -1);
                if (plus)
                    basis_[i] = slack_at;
                else
                    need_art.push_back(i);
                ++slack_at;
            } else {
                need_art.push_back(i);
            }
        }
        nart_ = need_art.size();
        for (auto& row : a_) row.resize(ncols_ + nart_, T(0));
        for (size_t k = 0; k < nart_; ++k) {
            a_[need_art[k]][ncols_ + k] = T(1);
            basis_[need_art[k]] = ncols_ + k;
        }
        ncols_ += nart_;
    }

    LpStatus run() {
        if (nart_ > 0) {
            /* Phase 1: minimize the artificial sum. */
            std::vector<T> d(ncols_, T(0));
            for (size_t j = ncols_ - nart_; j < ncols_; ++j) d[j] = T(1);
            T dval(0);
            reduce(d, dval);
            pivot_loop(d, dval, ncols_);
            if (Ops::pos(T(-dval)))  // leftover infeasibility
                return LpStatus::infeasible;
            evict_artificials();
        }
        std::vector<T> d(ncols_, T(0));
        for (uint32_t j = 0; j < p_.nvars; ++j) d[j] = Ops::from(p_.c[j]);
        T dval(0);
        reduce(d, dval);
        size_t limit = ncols_ - nart_;  // artificials never re-enter
        if (!pivot_loop(d, dval, limit))
            return LpStatus::unbounded;
        objective_ = T(-dval);
        return LpStatus::optimal;
    }

    std::vector<double> extract() const {
        std::vector<double> x(p_.nvars, 0.0);
        for (size_t i = 0; i < basis_.size(); ++i)
            if (basis_[i] < p_.nvars) x[basis_[i]] = Ops::to(b_[i]);
        return x;
    }

    double objective() const { return Ops::to(objective_); }

private:
    /* Zeroes the reduced costs of the current basis. */
    void reduce(std::vector<T>& d, T& dval) {
        for (size_t i = 0; i < basis_.size(); ++i) {
            T f = d[basis_[i]];
            if (f == T(0)) continue;
            for (size_t j = 0; j < ncols_; ++j) d[j] -= f * a_[i][j];
            dval -= f * b_[i];
        }
    }

    /* Bland's rule on both choices; returns false on an unbounded ray. */
    bool pivot_loop(std::vector<T>& d, T& dval, size_t col_limit) {
        for (;;) {
            size_t e = col_limit;
            for (size_t j = 0; j < col_limit; ++j)
                if (Ops::neg(d[j])) {
                    e = j;
                    break;
                }
            if (e == col_limit) return true;
            size_t r = SIZE_MAX;
            for (size_t i = 0; i < a_.size(); ++i) {
                if (!Ops::pos(a_[i][e])) continue;
                if (r == SIZE_MAX) {
                    r = i;
                    continue;
                }
                T lhs = b_[i] * a_[r][e];
                T rhs = b_[r] * a_[i][e];
                if (lhs < rhs || (lhs == rhs && basis_[i] < basis_[r])) r = i;
            }
            if (r == SIZE_MAX) return false;
            pivot(r, e, d, dval);
        }
    }

    void pivot(size_t r, size_t e, std::vector<T>& d, T& dval) {
        T piv = a_[r][e];
        if (Ops::tiny_pivot(piv)) throw BailOut{};
        for (size_t j = 0; j < ncols_; ++j) a_[r][j] /= piv;
        b_[r] /= piv;
        for (size_t i = 0; i < a_.size(); ++i) {
            if (i == r) continue;
            T f = a_[i][e];
            if (f == T(0)) continue;
            for (size_t j = 0; j < ncols_; ++j) a_[i][j] -= f * a_[r][j];
            b_[i] -= f * b_[r];
        }
        T f = d[e];
        if (f != T(0)) {
            for (size_t j = 0; j < ncols_; ++j) d[j] -= f * a_[r][j];
            dval -= f * b_[r];
        }
        basis_[r] = e;
    }

    /* Post phase 1: pivot basic artificials onto any real column in their
     * row; an all-zero row is redundant and keeps its harmless zero. */
    void evict_artificials() {
        size_t first_art = ncols_ - nart_;
        for (size_t i = 0; i < basis_.size(); ++i) {
            if (basis_[i] < first_art) continue;
            for (size_t j = 0; j < first_art; ++j) {
                if (Ops::pos(a_[i][j]) || Ops::neg(a_[i][j])) {
                    std::vector<T> dummy(ncols_, T(0));
                    T dv(0);
                    pivot(i, j, dummy, dv);
                    break;
                }
            }
        }
    }

    const LpProblem& p_;
    size_t ncols_ = 0, nslack_ = 0, nart_ = 0;
    std::vector<std::vector<T>> a_;
    std::vector<T> b_;
    std::vector<size_t> basis_;
    T objective_{0};
};

template <typename Ops>
LpSolution solve_with(const LpProblem& p) {
    Simplex<Ops> s(p);
    LpSolution out;
    out.status = s.run();
    if (out.status == LpStatus::optimal) {
        out.x = s.extract();
        out.objective = s.objective();
    }
    return out;
}

/* The promise attached to an optimal answer: primal feasibility. */
bool satisfies(const LpProblem& p, const std::vector<double>& x) {
    const double tol = 1e-9;
    for (double v : x)
        if (v < -tol) return false;
    for (size_t i = 0; i < p.rows.size(); ++i) {
        double dot = 0, scale = 1;
        for (uint32_t j = 0; j < p.nvars; ++j) {
            dot += p.rows[i][j] * x[j];
            scale = std::max(scale, std::fabs(p.rows[i][j] * x[j]));
        }
        double slack = dot - p.rhs[i];
        double band = tol * scale;
        switch (p.kinds[i]) {
            case RowKind::le:
                if (slack > band) return false;
                break;
            case RowKind::ge:
                if (slack < -band) return false;
                break;
            case RowKind::eq:
                if (std::fabs(slack) > band) return false;
                break;
        }
    }
    return true;
}

}  // namespace

LpSolution solve_lp_exact(const LpProblem& p) {
    LpSolution out = solve_with<RatOps>(p);
    out.exact = true;
    if (out.status == LpStatus::optimal)
        CQZ_CHECK(satisfies(p, out.x), "exact lp answer fails feasibility");
    return out;
}

LpSolution solve_lp(const LpProblem& p) {
    CQZ_CHECK(p.c.size() == p.nvars, "lp objective width mismatch");
    try {
        LpSolution out = solve_with<DoubleOps>(p);
        if (out.status == LpStatus::optimal && !satisfies(p, out.x))
            return solve_lp_exact(p);
        return out;
    } catch (const BailOut&) {
        return solve_lp_exact(p);
    }
}

}  // namespace cqz

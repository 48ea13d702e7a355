#pragma once

#include <cstdint>
#include <vector>

namespace cqz {

enum class RowKind : uint8_t { le, ge, eq };

/* Dense linear program: minimize c·x subject to the rows and x >= 0.
 * Instances here are tiny (tens of variables), so everything is explicit. */
struct LpProblem {
    uint32_t nvars = 0;
    std::vector<double> c;
    std::vector<std::vector<double>> rows;  // each of size nvars
    std::vector<RowKind> kinds;
    std::vector<double> rhs;

    void add_row(RowKind k, std::vector<double> a, double b);
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;
    double objective = 0;
    bool exact = false;  // settled by the rational path
};

/* Two-phase dense simplex with Bland's rule. The floating-point pass hands
 * over to exact rational arithmetic when it meets a pivot smaller than 1e-12
 * or its result fails the 1e-9 feasibility recheck. Optimal solutions satisfy
 * every row within 1e-9. */
LpSolution solve_lp(const LpProblem& p);

/* Forces the rational path; used by tests to pin both paths to the same
 * answers. */
LpSolution solve_lp_exact(const LpProblem& p);

}  // namespace cqz

#pragma once

#include <span>
#include <vector>

#include "cqz/view.hpp"

namespace cqz {

/* Fractional edge cover: one weight per view edge, each in [0,1], with every
 * variable covered to total weight >= 1. */
struct Cover {
    std::vector<double> u;
};

/* Σ_{F∋x} u_F for one variable. */
double coverage(const PreparedView& pv, const Cover& c, VarId x);

/* Slack over a variable set: min_x Σ_{F∋x} u_F. Empty set is +∞ by
 * convention (all-bound views have no free variables to constrain). */
double slack(const PreparedView& pv, const Cover& c, std::span<const VarId> vars);

/* Slack over V_f, the denominator of the scaled exponents. */
double free_slack(const PreparedView& pv, const Cover& c);

/* Throws data_error unless weights are in [0,1] and every variable of the
 * view is covered (tolerance 1e-9). */
void validate_cover(const PreparedView& pv, const Cover& c);

/* Π_F sizes[F]^{u_F}. Any zero-sized edge with positive weight zeroes the
 * product. */
double agm_bound(const Cover& c, std::span<const uint64_t> sizes);

/* Exponents û = u / slack(V_f) used by the cost function. With no free
 * variables the slack is +∞ and every exponent collapses to zero. */
Cover hat_cover(const PreparedView& pv, const Cover& c);

}  // namespace cqz

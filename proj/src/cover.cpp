#include "cqz/cover.hpp"

#include <cmath>
#include <limits>

#include "cqz/error.hpp"

namespace cqz {

double coverage(const PreparedView& pv, const Cover& c, VarId x) {
    double s = 0;
    for (uint32_t e : pv.edges_of(x)) s += c.u[e];
    return s;
}

double slack(const PreparedView& pv, const Cover& c, std::span<const VarId> vars) {
    if (vars.empty()) return std::numeric_limits<double>::infinity();
    double s = std::numeric_limits<double>::infinity();
    for (VarId x : vars) s = std::min(s, coverage(pv, c, x));
    return s;
}

double free_slack(const PreparedView& pv, const Cover& c) {
    std::vector<VarId> vf(pv.mu());
    for (VarId x = 0; x < pv.mu(); ++x) vf[x] = x;
    return slack(pv, c, vf);
}

void validate_cover(const PreparedView& pv, const Cover& c) {
    if (c.u.size() != pv.num_edges())
        throw data_error("cover has " + std::to_string(c.u.size()) +
                         " weights, view has " + std::to_string(pv.num_edges()) +
                         " edges");
    const double eps = 1e-9;
    for (double w : c.u)
        if (!(w >= -eps && w <= 1 + eps))
            throw data_error("cover weight " + std::to_string(w) +
                             " outside [0,1]");
    for (VarId x = 0; x < pv.num_vars(); ++x)
        if (coverage(pv, c, x) < 1 - eps)
            throw data_error("variable " + pv.var_name(x) +
                             " not covered (total " +
                             std::to_string(coverage(pv, c, x)) + ")");
}

double agm_bound(const Cover& c, std::span<const uint64_t> sizes) {
    double p = 1;
    for (size_t e = 0; e < c.u.size(); ++e) {
        if (c.u[e] <= 0) continue;
        if (sizes[e] == 0) return 0;
        p *= std::pow(static_cast<double>(sizes[e]), c.u[e]);
    }
    return p;
}

Cover hat_cover(const PreparedView& pv, const Cover& c) {
    double a = free_slack(pv, c);
    Cover h;
    h.u.resize(c.u.size());
    for (size_t e = 0; e < c.u.size(); ++e)
        h.u[e] = std::isinf(a) ? 0.0 : c.u[e] / a;
    return h;
}

}  // namespace cqz

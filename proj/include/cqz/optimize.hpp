#pragma once

#include <span>

#include "cqz/cover.hpp"
#include "cqz/lp.hpp"

namespace cqz {

/* Hypergraph abstraction the cover optimizers work on: per-edge log sizes,
 * per-variable incidence, and which variables are enumerated (free). Bags of
 * a decomposition reduce to the same shape as whole views. */
struct CoverInstance {
    std::vector<double> log_size;                  // ln|R_F| per edge
    std::vector<std::vector<uint32_t>> var_edges;  // incident edges per var
    std::vector<uint8_t> free_var;                 // 1 = enumerated
    double log_total = 0;                          // ln Σ|R|

    uint32_t num_edges() const { return static_cast<uint32_t>(log_size.size()); }
    uint32_t num_vars() const { return static_cast<uint32_t>(var_edges.size()); }

    static CoverInstance of_view(const PreparedView& pv,
                                 std::span<const uint64_t> sizes);
    static CoverInstance of_view(const PreparedView& pv);
};

struct DelayChoice {
    std::vector<double> u;
    double alpha = 1;
    double tau = 1;
    double log_tau = 0;  // natural log
};

/* Smallest delay knob whose index fits in `space` cells. The bilinear
 * space constraint Π|R_F|^{u_F} / τ^α ≤ space becomes linear-fractional in
 * (u, α, α·log τ) and is solved via the Charnes-Cooper transformation as one
 * LP; a second LP breaks ties towards the lightest cover. */
DelayChoice min_delay_cover(const CoverInstance& inst, double space);
DelayChoice min_delay_cover(const PreparedView& pv,
                            std::span<const uint64_t> sizes, double space);

struct SpaceChoice {
    std::vector<double> u;
    double alpha = 1;
    double tau = 1;
    double space = 0;
    double log_space = 0;
};

/* Smallest space whose best delay stays within `delay`: binary search on the
 * space exponent over [1, #edges] at 1e-3 resolution, one delay
 * minimization per probe. */
SpaceChoice min_space_cover(const CoverInstance& inst, double delay);
SpaceChoice min_space_cover(const PreparedView& pv,
                            std::span<const uint64_t> sizes, double delay);

struct DiscountedCover {
    std::vector<double> u;
    double alpha = 1;
    double exponent = 0;  // min Σu_F - delta·slack(free vars)
};

/* Cover weight discounted by `delta` times the slack it buys over the free
 * variables; the per-bag space exponent of a delay assignment. With no free
 * variables the discount is dropped and alpha reports +inf. */
DiscountedCover discounted_cover(const CoverInstance& inst, double delta);

}  // namespace cqz

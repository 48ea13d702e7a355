#include "cqz/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cqz/error.hpp"

namespace cqz {

CoverInstance CoverInstance::of_view(const PreparedView& pv,
                                     std::span<const uint64_t> sizes) {
    CQZ_CHECK(sizes.size() == pv.num_edges(), "one size per view edge");
    CoverInstance inst;
    uint64_t total = 0;
    for (uint64_t s : sizes) {
        inst.log_size.push_back(std::log(static_cast<double>(std::max<uint64_t>(s, 1))));
        total += s;
    }
    inst.log_total = std::log(static_cast<double>(std::max<uint64_t>(total, 1)));
    for (VarId x = 0; x < pv.num_vars(); ++x) {
        inst.var_edges.push_back(pv.edges_of(x));
        inst.free_var.push_back(pv.is_free(x) ? 1 : 0);
    }
    return inst;
}

CoverInstance CoverInstance::of_view(const PreparedView& pv) {
    std::vector<uint64_t> sizes;
    for (uint32_t e = 0; e < pv.num_edges(); ++e)
        sizes.push_back(pv.edge(e).size());
    return of_view(pv, sizes);
}

namespace {

constexpr double kTieTol = 1e-9;

std::vector<double> zeros(uint32_t n) { return std::vector<double>(n, 0.0); }

/* Charnes-Cooper image of the delay program. Variables: y_u per edge, then
 * y_alpha, y_tauhat, t; all >= 0. The normalization pins y_alpha = 1, so the
 * first-stage objective y_tauhat equals log tau directly. */
struct DelayLp {
    LpProblem p;
    uint32_t k;           // edges
    uint32_t ya, yt, tt;  // column ids

    DelayLp(const CoverInstance& inst, double log_space) {
        k = inst.num_edges();
        ya = k;
        yt = k + 1;
        tt = k + 2;
        p.nvars = k + 3;
        p.c = zeros(p.nvars);
        p.c[yt] = 1;

        /* Space: Σ y_u ln|R_F| - y_tauhat - t·lnΣ <= 0. */
        std::vector<double> row = zeros(p.nvars);
        for (uint32_t F = 0; F < k; ++F) row[F] = inst.log_size[F];
        row[yt] = -1;
        row[tt] = -log_space;
        p.add_row(RowKind::le, std::move(row), 0);

        for (uint32_t x = 0; x < inst.num_vars(); ++x) {
            /* Coverage >= 1 (scaled: >= t). */
            row = zeros(p.nvars);
            for (uint32_t F : inst.var_edges[x]) row[F] += 1;
            row[tt] = -1;
            p.add_row(RowKind::ge, row, 0);
            if (inst.free_var[x]) {
                /* Free coverage >= alpha (scaled: >= y_alpha). */
                row[tt] = 0;
                row[ya] = -1;
                p.add_row(RowKind::ge, std::move(row), 0);
            }
        }
        for (uint32_t F = 0; F < k; ++F) {
            row = zeros(p.nvars);
            row[F] = 1;
            row[tt] = -1;
            p.add_row(RowKind::le, std::move(row), 0);  // u_F <= 1
        }
        /* alpha >= 1, plus the bounds that keep the region compact. */
        double amax = inst.num_vars() + static_cast<double>(k) + 1;
        double tmax = amax * amax * std::max(inst.log_total, 1.0);
        row = zeros(p.nvars);
        row[ya] = 1;
        row[tt] = -1;
        p.add_row(RowKind::ge, std::move(row), 0);
        row = zeros(p.nvars);
        row[ya] = 1;
        row[tt] = -amax;
        p.add_row(RowKind::le, std::move(row), 0);
        row = zeros(p.nvars);
        row[yt] = 1;
        row[tt] = -tmax;
        p.add_row(RowKind::le, std::move(row), 0);
        /* Normalization y_alpha = 1. */
        row = zeros(p.nvars);
        row[ya] = 1;
        p.add_row(RowKind::eq, std::move(row), 1);
    }
};

DelayChoice undo_transform(const DelayLp& lp, const LpSolution& s) {
    double t = s.x[lp.tt];
    CQZ_CHECK(t > 0, "degenerate transform scale");
    DelayChoice out;
    for (uint32_t F = 0; F < lp.k; ++F)
        out.u.push_back(std::clamp(s.x[F] / t, 0.0, 1.0));
    out.alpha = s.x[lp.ya] / t;
    out.log_tau = s.x[lp.yt] / t / out.alpha;
    out.tau = std::exp(out.log_tau);
    return out;
}

}  // namespace

DelayChoice min_delay_cover(const CoverInstance& inst, double space) {
    CQZ_CHECK(inst.num_edges() > 0, "cover optimization needs edges");
    /* The budget must at least hold the largest base relation. */
    double floor_log =
        *std::max_element(inst.log_size.begin(), inst.log_size.end());
    if (std::log(space) < floor_log - 1e-9)
        throw data_error("space budget is below the largest relation");

    DelayLp lp(inst, std::log(space));
    LpSolution first = solve_lp(lp.p);
    CQZ_CHECK(first.status == LpStatus::optimal,
              "delay program must be feasible and bounded");

    /* Tie-break: keep log tau at its optimum, take the lightest cover. */
    DelayLp lp2(inst, std::log(space));
    std::vector<double> row = zeros(lp2.p.nvars);
    row[lp2.yt] = 1;
    lp2.p.add_row(RowKind::le, std::move(row), first.objective + kTieTol);
    lp2.p.c = zeros(lp2.p.nvars);
    for (uint32_t F = 0; F < lp2.k; ++F) lp2.p.c[F] = 1;
    LpSolution second = solve_lp(lp2.p);
    CQZ_CHECK(second.status == LpStatus::optimal, "tie-break stage must stay feasible");
    DelayChoice out = undo_transform(lp2, second);
    /* The optimum is the first stage's objective; the second stage only
     * chooses among covers within the tie tolerance. */
    out.log_tau = std::max(first.objective, 0.0);
    out.tau = std::exp(out.log_tau);
    return out;
}

DelayChoice min_delay_cover(const PreparedView& pv,
                            std::span<const uint64_t> sizes, double space) {
    return min_delay_cover(CoverInstance::of_view(pv, sizes), space);
}

SpaceChoice min_space_cover(const CoverInstance& inst, double delay) {
    if (delay < 1) throw data_error("delay budget must be at least 1");
    double k = inst.num_edges();
    const double step = 1e-3;
    auto log_space_at = [&](long n) {
        double e = std::min(1.0 + step * static_cast<double>(n), k);
        return e * inst.log_total;
    };
    long hi_n = static_cast<long>(std::ceil(std::max(k - 1.0, 0.0) / step));
    auto fits = [&](long n) {
        DelayChoice c = min_delay_cover(inst, std::exp(log_space_at(n)));
        return c.tau <= delay * (1 + 1e-9);
    };
    /* Delay is non-increasing in space, so the smallest passing grid point
     * is found by bisection. */
    long lo = 0, hi = hi_n;
    if (fits(lo)) {
        hi = lo;
    } else {
        CQZ_CHECK(fits(hi),
                  "full materialization must meet any delay budget >= 1");
        while (hi - lo > 1) {
            long mid = lo + (hi - lo) / 2;
            if (fits(mid))
                hi = mid;
            else
                lo = mid;
        }
    }
    DelayChoice c = min_delay_cover(inst, std::exp(log_space_at(hi)));
    SpaceChoice out;
    out.u = std::move(c.u);
    out.alpha = c.alpha;
    out.tau = c.tau;
    out.log_space = log_space_at(hi);
    out.space = std::exp(out.log_space);
    return out;
}

SpaceChoice min_space_cover(const PreparedView& pv,
                            std::span<const uint64_t> sizes, double delay) {
    return min_space_cover(CoverInstance::of_view(pv, sizes), delay);
}

DiscountedCover discounted_cover(const CoverInstance& inst, double delta) {
    CQZ_CHECK(delta >= 0, "delay assignments are non-negative");
    uint32_t k = inst.num_edges();
    CQZ_CHECK(k > 0, "cover optimization needs edges");
    bool any_free = std::any_of(inst.free_var.begin(), inst.free_var.end(),
                                [](uint8_t f) { return f != 0; });

    LpProblem p;
    p.nvars = k + 1;  // u_F then alpha
    p.c = zeros(p.nvars);
    for (uint32_t F = 0; F < k; ++F) p.c[F] = 1;
    if (any_free) p.c[k] = -delta;

    std::vector<double> row;
    for (uint32_t x = 0; x < inst.num_vars(); ++x) {
        row = zeros(p.nvars);
        for (uint32_t F : inst.var_edges[x]) row[F] += 1;
        p.add_row(RowKind::ge, row, 1);
        if (any_free && inst.free_var[x]) {
            row[k] = -1;
            p.add_row(RowKind::ge, std::move(row), 0);
        }
    }
    for (uint32_t F = 0; F < k; ++F) {
        row = zeros(p.nvars);
        row[F] = 1;
        p.add_row(RowKind::le, std::move(row), 1);
    }
    row = zeros(p.nvars);
    row[k] = 1;
    p.add_row(RowKind::ge, std::move(row), 1);  // alpha >= 1

    LpSolution s = solve_lp(p);
    CQZ_CHECK(s.status == LpStatus::optimal,
              "discounted cover program must be feasible and bounded");
    DiscountedCover out;
    for (uint32_t F = 0; F < k; ++F)
        out.u.push_back(std::clamp(s.x[F], 0.0, 1.0));
    out.alpha =
        any_free ? s.x[k] : std::numeric_limits<double>::infinity();
    out.exponent = s.objective;
    return out;
}

}  // namespace cqz

#include "cqz/cost.hpp"

#include <cmath>

#include "cqz/error.hpp"

namespace cqz {
namespace {

uint32_t bound_arity(const PreparedView& pv, uint32_t e) {
    uint32_t n = 0;
    for (VarId x : pv.edge(e).schema())
        if (!pv.is_free(x)) ++n;
    return n;
}

}  // namespace

uint64_t restricted_count(const PreparedView& pv, uint32_t e, const FBox& B,
                          const Binding* v, WorkMeter* m) {
    if (B.empty) return 0;
    const Relation& rel = pv.edge(e);
    const SortedIndex& ix = v ? pv.bound_major(e) : pv.free_major(e);
    RowRange r = ix.full();
    uint32_t depth = 0;
    if (v) {
        uint32_t nb = bound_arity(pv, e);
        for (; depth < nb; ++depth) {
            VarId x = rel.schema()[ix.cols()[depth]];
            r = ix.narrow_eq(r, depth, (*v)[x - pv.mu()], m);
            if (r.empty()) return 0;
        }
    }
    /* Free key columns follow in global free order; the canonical shape
     * means units come first, then at most one ranged column. */
    for (; depth < rel.arity(); ++depth) {
        VarId x = rel.schema()[ix.cols()[depth]];
        uint32_t pos = x;  // free ids coincide with free positions
        if (pos < B.prefix.size()) {
            r = ix.narrow_eq(r, depth, B.prefix[pos], m);
        } else if (pos == B.prefix.size() && B.range) {
            auto bounds = box_bounds_at(B, pv.grid(), pos);
            if (!bounds) return 0;
            r = ix.narrow_range(r, depth, bounds->first, bounds->second, m);
            break;
        } else {
            break;  // full from here on
        }
        if (r.empty()) return 0;
    }
    return r.size();
}

double cost_box(const PreparedView& pv, const Cover& u_hat, const FBox& B,
                const Binding* v, WorkMeter* m) {
    if (B.empty) return 0;
    double p = 1;
    for (uint32_t e = 0; e < pv.num_edges(); ++e) {
        uint64_t cnt = restricted_count(pv, e, B, v, m);
        if (cnt == 0) return 0;
        p *= std::pow(static_cast<double>(cnt), u_hat.u[e]);
    }
    return p;
}

double cost_interval(const PreparedView& pv, const Cover& u_hat,
                     const FInterval& I, const Binding* v, WorkMeter* m) {
    double s = 0;
    for (const FBox& B : box_decompose(I, pv.grid()).boxes)
        s += cost_box(pv, u_hat, B, v, m);
    return s;
}

Value split_box(const PreparedView& pv, const Cover& u_hat, const FBox& B,
                double t, WorkMeter* m) {
    CQZ_CHECK(B.range.has_value(), "split_box requires a ranged position");
    const uint32_t pos = B.range_pos();
    const GridAxis& ax = pv.grid().axes[pos];
    auto bounds = box_bounds_at(B, pv.grid(), pos);
    CQZ_CHECK(bounds.has_value(), "split_box requires a non-empty range");
    uint32_t ilo = *ax.index_of(bounds->first);
    uint32_t ihi = *ax.index_of(bounds->second);

    const double total = cost_box(pv, u_hat, B, nullptr, m);
    const double goal = std::min(total, t);

    auto cum = [&](uint32_t i) {
        FBox sub;
        sub.prefix = B.prefix;
        sub.range = AxisRange{bounds->first, ax.at(i), false, false};
        return cost_box(pv, u_hat, sub, nullptr, m);
    };

    /* v_i is non-decreasing and reaches `total` at ihi, so the smallest
     * qualifying index always exists. */
    uint32_t lo = ilo, hi = ihi;
    while (lo < hi) {
        uint32_t mid = lo + (hi - lo) / 2;
        tick(m);
        if (cum(mid) >= goal)
            hi = mid;
        else
            lo = mid + 1;
    }
    return ax.at(lo);
}

std::vector<Value> split_interval(const PreparedView& pv, const Cover& u_hat,
                                  const FInterval& I, WorkMeter* m) {
    CQZ_CHECK(!I.is_empty(), "cannot split an empty interval");
    const FreeGrid& g = pv.grid();
    const uint32_t mu = g.dims();
    auto boxes = box_decompose(I, g).boxes;

    std::vector<double> tb(boxes.size());
    double total = 0;
    for (size_t i = 0; i < boxes.size(); ++i) {
        tb[i] = cost_box(pv, u_hat, boxes[i], nullptr, m);
        total += tb[i];
    }
    if (total == 0) return I.lo;  // no mass anywhere; any point splits

    size_t s = 0;
    double prefix = 0;
    while (prefix + tb[s] <= total / 2) prefix += tb[s++];

    const FBox& bs = boxes[s];
    std::vector<Value> c = bs.prefix;
    double gamma = prefix;       // mass strictly before the growing split point
    double delta = tb[s];        // mass of the pinned unit-prefix box

    for (uint32_t j = bs.range_pos(); j < mu; ++j) {
        const GridAxis& ax = g.axes[j];
        uint32_t ilo = 0, ihi = ax.size() - 1;
        if (j == bs.range_pos() && bs.range) {
            auto bounds = box_bounds_at(bs, g, j);
            CQZ_CHECK(bounds.has_value(), "selected box lost its range");
            ilo = *ax.index_of(bounds->first);
            ihi = *ax.index_of(bounds->second);
        }
        const double budget = std::min(delta, total / 2 - gamma);

        auto cum = [&](uint32_t i) {
            FBox sub;
            sub.prefix = c;
            sub.range = AxisRange{ax.at(ilo), ax.at(i), false, false};
            return cost_box(pv, u_hat, sub, nullptr, m);
        };
        uint32_t lo = ilo, hi = ihi;
        while (lo < hi) {
            uint32_t mid = lo + (hi - lo) / 2;
            tick(m);
            if (cum(mid) >= budget)
                hi = mid;
            else
                lo = mid + 1;
        }
        if (lo > ilo) {
            FBox below;
            below.prefix = c;
            below.range = AxisRange{ax.at(ilo), ax.at(lo - 1), false, false};
            gamma += cost_box(pv, u_hat, below, nullptr, m);
        }
        c.push_back(ax.at(lo));
        FBox pinned;
        pinned.prefix = c;
        delta = cost_box(pv, u_hat, pinned, nullptr, m);
    }
    return c;
}

}  // namespace cqz

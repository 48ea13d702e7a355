#include "cqz/interval.hpp"

#include <algorithm>

#include "cqz/error.hpp"

namespace cqz {
namespace {

uint32_t axis_index(const GridAxis& ax, Value v) {
    auto idx = ax.index_of(v);
    CQZ_CHECK(idx.has_value(), "interval endpoint off the active-domain grid");
    return *idx;
}

/* Unit-prefix box with a range between two on-axis values. Openness stays
 * in the flags; emptiness is decided against the axis up front. */
FBox make_box(std::vector<Value> prefix, const GridAxis& ax, Value lo_val,
              Value hi_val, bool lo_open, bool hi_open) {
    FBox b;
    b.prefix = std::move(prefix);
    b.range = AxisRange{lo_val, hi_val, lo_open, hi_open};
    int64_t lo = axis_index(ax, lo_val) + (lo_open ? 1 : 0);
    int64_t hi = static_cast<int64_t>(axis_index(ax, hi_val)) - (hi_open ? 1 : 0);
    b.empty = lo > hi;
    return b;
}

}  // namespace

bool FInterval::is_empty() const {
    if (forced_empty) return true;
    if (std::lexicographical_compare(hi.begin(), hi.end(), lo.begin(), lo.end()))
        return true;
    if (lo == hi && (lo_open || hi_open)) return true;
    return false;
}

BoxDecomposition box_decompose(const FInterval& I, const FreeGrid& g) {
    BoxDecomposition d;
    if (I.is_empty()) return d;
    const uint32_t mu = g.dims();
    CQZ_CHECK(I.lo.size() == mu && I.hi.size() == mu,
              "interval dimension mismatch");
    if (mu == 0) {
        d.boxes.push_back(FBox{});  // zero-dimensional point
        return d;
    }

    uint32_t j = 0;
    while (j < mu && I.lo[j] == I.hi[j]) ++j;

    if (j == mu) {
        /* Equal closed endpoints: one all-unit box. */
        FBox b;
        b.prefix = I.lo;
        d.boxes.push_back(std::move(b));
        return d;
    }
    if (j == mu - 1) {
        /* Endpoints differ only at the last position: the interval is itself
         * one box carrying I's own openness. */
        const GridAxis& ax = g.axes[j];
        d.boxes.push_back(make_box({I.lo.begin(), I.lo.begin() + j}, ax,
                                   I.lo[j], I.hi[j], I.lo_open, I.hi_open));
        return d;
    }

    /* Left tail: positions mu-1 down to j+1 climb to the axis top. */
    for (uint32_t i = mu - 1; i > j; --i) {
        const GridAxis& ax = g.axes[i];
        bool open_lo = (i == mu - 1) ? I.lo_open : true;
        d.boxes.push_back(make_box({I.lo.begin(), I.lo.begin() + i}, ax,
                                   I.lo[i], ax.at(ax.size() - 1), open_lo,
                                   false));
    }
    /* Middle: strictly open range at the first differing position. */
    {
        const GridAxis& ax = g.axes[j];
        d.boxes.push_back(make_box({I.lo.begin(), I.lo.begin() + j}, ax,
                                   I.lo[j], I.hi[j], true, true));
    }
    /* Right tail: positions j+1 up to mu-1 descend from the axis bottom. */
    for (uint32_t i = j + 1; i < mu; ++i) {
        const GridAxis& ax = g.axes[i];
        bool open_hi = (i == mu - 1) ? I.hi_open : true;
        d.boxes.push_back(make_box({I.hi.begin(), I.hi.begin() + i}, ax,
                                   ax.at(0), I.hi[i], false, open_hi));
    }
    CQZ_CHECK(d.boxes.size() <= 2 * static_cast<size_t>(mu) - 1,
              "box decomposition too long");
    return d;
}

std::optional<std::pair<Value, Value>> box_bounds_at(const FBox& b,
                                                     const FreeGrid& g,
                                                     uint32_t pos) {
    if (b.empty) return std::nullopt;
    if (pos < b.prefix.size()) return std::make_pair(b.prefix[pos], b.prefix[pos]);
    const GridAxis& ax = g.axes[pos];
    if (ax.size() == 0) return std::nullopt;
    if (pos == b.prefix.size() && b.range) {
        const AxisRange& r = *b.range;
        int64_t lo = axis_index(ax, r.lo) + (r.lo_open ? 1 : 0);
        int64_t hi = static_cast<int64_t>(axis_index(ax, r.hi)) -
                     (r.hi_open ? 1 : 0);
        if (lo > hi) return std::nullopt;
        return std::make_pair(ax.at(static_cast<uint32_t>(lo)),
                              ax.at(static_cast<uint32_t>(hi)));
    }
    return std::make_pair(ax.at(0), ax.at(ax.size() - 1));
}

std::optional<std::vector<Value>> grid_succ(const FreeGrid& g,
                                            std::span<const Value> t) {
    std::vector<Value> out(t.begin(), t.end());
    for (uint32_t i = g.dims(); i-- > 0;) {
        const GridAxis& ax = g.axes[i];
        uint32_t idx = axis_index(ax, out[i]);
        if (idx + 1 < ax.size()) {
            out[i] = ax.at(idx + 1);
            for (uint32_t k = i + 1; k < g.dims(); ++k) out[k] = g.axes[k].at(0);
            return out;
        }
    }
    return std::nullopt;
}

std::optional<std::vector<Value>> grid_pred(const FreeGrid& g,
                                            std::span<const Value> t) {
    std::vector<Value> out(t.begin(), t.end());
    for (uint32_t i = g.dims(); i-- > 0;) {
        const GridAxis& ax = g.axes[i];
        uint32_t idx = axis_index(ax, out[i]);
        if (idx > 0) {
            out[i] = ax.at(idx - 1);
            for (uint32_t k = i + 1; k < g.dims(); ++k)
                out[k] = g.axes[k].at(g.axes[k].size() - 1);
            return out;
        }
    }
    return std::nullopt;
}

FInterval full_interval(const FreeGrid& g) {
    FInterval I;
    if (g.any_axis_empty()) {
        I.forced_empty = true;
        I.lo.assign(g.dims(), 0);
        I.hi.assign(g.dims(), 0);
        return I;
    }
    for (const auto& ax : g.axes) {
        I.lo.push_back(ax.at(0));
        I.hi.push_back(ax.at(ax.size() - 1));
    }
    return I;
}

FInterval closed_left(const FInterval& I, std::span<const Value> c,
                      const FreeGrid& g) {
    CQZ_CHECK(!I.lo_open && !I.hi_open, "tree intervals must be closed");
    FInterval out;
    auto p = grid_pred(g, c);
    if (!p || lex_less(*p, I.lo)) {
        out.forced_empty = true;
        out.lo = I.lo;
        out.hi = I.lo;
        return out;
    }
    out.lo = I.lo;
    out.hi = std::move(*p);
    return out;
}

FInterval closed_right(const FInterval& I, std::span<const Value> c,
                       const FreeGrid& g) {
    CQZ_CHECK(!I.lo_open && !I.hi_open, "tree intervals must be closed");
    FInterval out;
    auto s = grid_succ(g, c);
    if (!s || lex_less(I.hi, *s)) {
        out.forced_empty = true;
        out.lo = I.hi;
        out.hi = I.hi;
        return out;
    }
    out.lo = std::move(*s);
    out.hi = I.hi;
    return out;
}

bool lex_less(std::span<const Value> a, std::span<const Value> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

std::string to_string(const FInterval& I, const ValueDict& d) {
    auto tup = [&](const std::vector<Value>& t) {
        std::string s = "<";
        for (size_t i = 0; i < t.size(); ++i) {
            if (i) s += ",";
            s += d.decode(t[i]).to_string();
        }
        return s + ">";
    };
    if (I.is_empty()) return "(empty)";
    std::string s = I.lo_open ? "(" : "[";
    s += tup(I.lo) + "," + tup(I.hi);
    s += I.hi_open ? ")" : "]";
    return s;
}

std::string to_string(const FBox& b, const FreeGrid&, const ValueDict& d,
                      uint32_t mu) {
    std::string s = "<";
    for (uint32_t i = 0; i < mu; ++i) {
        if (i) s += ",";
        if (i < b.prefix.size()) {
            s += d.decode(b.prefix[i]).to_string();
        } else if (i == b.prefix.size() && b.range) {
            const AxisRange& r = *b.range;
            s += r.lo_open ? "(" : "[";
            s += d.decode(r.lo).to_string() + "," + d.decode(r.hi).to_string();
            s += r.hi_open ? ")" : "]";
        } else {
            s += "#";
        }
    }
    s += ">";
    if (b.empty) s += "{empty}";
    return s;
}

}  // namespace cqz

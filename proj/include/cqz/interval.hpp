#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cqz/view.hpp"

namespace cqz {

/* One coordinate interval of a box. Endpoints are value codes that lie on
 * the owning axis; openness is kept as flags rather than materialized via
 * successor, so sparse active domains decompose exactly. */
struct AxisRange {
    Value lo = 0;
    Value hi = 0;
    bool lo_open = false;
    bool hi_open = false;

    bool is_unit() const { return lo == hi && !lo_open && !hi_open; }
};

/* Lexicographic interval over the free grid; endpoint tuples are on-grid.
 * `forced_empty` marks intervals produced by a degenerate split. */
struct FInterval {
    std::vector<Value> lo, hi;
    bool lo_open = false;
    bool hi_open = false;
    bool forced_empty = false;

    /* Definitional emptiness (lex order + flags). A non-empty result still
     * admits boxes with no grid tuples; those carry their own empty flag. */
    bool is_empty() const;
};

/* Canonical box: unit values for positions 0..prefix.size()-1, an optional
 * range at position prefix.size(), and implicit full intervals after it. */
struct FBox {
    std::vector<Value> prefix;
    std::optional<AxisRange> range;
    bool empty = false;  // contains no grid tuple

    uint32_t range_pos() const { return static_cast<uint32_t>(prefix.size()); }
};

struct BoxDecomposition {
    std::vector<FBox> boxes;  // lexicographic order, length <= 2*mu - 1
};

/* The canonical-box partition of I: left tail boxes, middle open box at the
 * first differing position, right tail boxes. Empty boxes are retained and
 * flagged so positional structure survives. Definitionally empty input
 * yields an empty list. */
BoxDecomposition box_decompose(const FInterval& I, const FreeGrid& g);

/* Inclusive on-axis value bounds of box position `pos` (flags resolved via
 * the axis); nullopt when no axis value qualifies. */
std::optional<std::pair<Value, Value>> box_bounds_at(const FBox& b,
                                                     const FreeGrid& g,
                                                     uint32_t pos);

/* Immediate lexicographic neighbor over the product of active domains;
 * nullopt beyond the grid ends. */
std::optional<std::vector<Value>> grid_succ(const FreeGrid& g,
                                            std::span<const Value> t);
std::optional<std::vector<Value>> grid_pred(const FreeGrid& g,
                                            std::span<const Value> t);

/* [bottom, top] closed; explicit empty when an axis has no values. */
FInterval full_interval(const FreeGrid& g);

/* Closed forms of [I.lo, c) and (c, I.hi], empty-flagged when they vanish.
 * Requires I closed (tree intervals are kept closed-normalized). */
FInterval closed_left(const FInterval& I, std::span<const Value> c,
                      const FreeGrid& g);
FInterval closed_right(const FInterval& I, std::span<const Value> c,
                       const FreeGrid& g);

bool lex_less(std::span<const Value> a, std::span<const Value> b);

/* Debug rendering, decoded through the dictionary. */
std::string to_string(const FInterval& I, const ValueDict& d);
std::string to_string(const FBox& b, const FreeGrid& g, const ValueDict& d,
                      uint32_t mu);

}  // namespace cqz

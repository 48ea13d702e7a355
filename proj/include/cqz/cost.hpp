#pragma once

#include "cqz/cover.hpp"
#include "cqz/interval.hpp"
#include "cqz/meter.hpp"

namespace cqz {

/* Values for every bound variable, in bound order (var id - mu). */
using Binding = std::vector<Value>;

/* Rows of edge e consistent with the box (and the bound binding, if given).
 * Canonical boxes make this a prefix-equality walk plus one range narrowing
 * on the appropriate sorted index. */
uint64_t restricted_count(const PreparedView& pv, uint32_t e, const FBox& B,
                          const Binding* v, WorkMeter* m);

/* The cost estimate over one box: Π_F |R_F(B)|^{û_F} with the scaled
 * exponents û = u/α(V_f); any empty restriction zeroes it. */
double cost_box(const PreparedView& pv, const Cover& u_hat, const FBox& B,
                const Binding* v, WorkMeter* m);

/* Σ of cost_box over the box decomposition of I. */
double cost_interval(const PreparedView& pv, const Cover& u_hat,
                     const FInterval& I, const Binding* v, WorkMeter* m);

/* Smallest on-axis value β of B's range position such that the closed
 * sub-box up to β reaches min(cost(B), t); then the open left part stays
 * within t and the strict right part within max(0, cost(B) - t). */
Value split_box(const PreparedView& pv, const Cover& u_hat, const FBox& B,
                double t, WorkMeter* m);

/* Balanced interval split: returns c in the closure of I with
 * cost([lo,c)) and cost((c,hi]) both at most cost(I)/2. A single-point
 * interval comes back unchanged with both halves empty. */
std::vector<Value> split_interval(const PreparedView& pv, const Cover& u_hat,
                                  const FInterval& I, WorkMeter* m);

}  // namespace cqz

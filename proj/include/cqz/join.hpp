#pragma once

#include <optional>

#include "cqz/cost.hpp"

namespace cqz {

/* Streaming natural join of a set of view edges inside one canonical box,
 * with every bound variable fixed by the binding. Tuples of free values come
 * out in lexicographic free order, each exactly once. The join proceeds
 * variable-at-a-time with sorted-index leapfrogging, so metered work stays
 * within the cost estimate times a log factor. */
class GenericJoin {
public:
    /* binding must cover all bound variables of the view (empty if none).
     * A free variable outside every selected edge ranges over its axis. */
    GenericJoin(const PreparedView& pv, std::vector<uint32_t> edges,
                const Binding* binding, FBox box, WorkMeter* m);

    std::optional<std::vector<Value>> next();

private:
    struct Participant {
        uint32_t edge;
        uint32_t depth;  // key column of the edge's index at this level
    };

    std::optional<Value> first_candidate(uint32_t level, Value from);
    bool descend(Value v);

    const PreparedView& pv_;
    std::vector<uint32_t> edges_;
    Binding binding_;  // copied; the cursor must survive caller moves
    FBox box_;
    WorkMeter* m_;

    std::vector<RowRange> range_;               // current range per edge
    std::vector<std::vector<Participant>> at_;  // participants per level
    std::vector<std::vector<std::pair<uint32_t, RowRange>>> saved_;
    std::vector<Value> tuple_;
    uint32_t level_ = 0;
    bool exhausted_ = false;
    bool fresh_ = true;
};

/* Naive evaluation of one access request directly over the base tables and
 * the original atoms (constants and repeats included): candidate values per
 * variable scanned from the columns, every combination checked atom by
 * atom. Independent of the rewriting and index machinery; the testing
 * oracle. Returns sorted, duplicate-free free-variable tuples. */
std::vector<std::vector<Value>> brute_force_answer(
    const Database& db, const AdornedView& view,
    const std::vector<Value>& binding);

/* Same, with the binding given as raw constants in bound order. */
std::vector<std::vector<Value>> brute_force_answer(
    const Database& db, const AdornedView& view, const std::vector<Raw>& binding);

/* All-bound views: one hash probe per atom. */
bool all_bound_membership(const PreparedView& pv, const Binding& binding,
                          WorkMeter* m);

/* True iff the combined tuple (free values + binding) is a row of every
 * edge; the final emission check of the enumeration algorithms. */
bool tuple_in_all_edges(const PreparedView& pv, std::span<const Value> free_vals,
                        const Binding& binding, WorkMeter* m);

}  // namespace cqz

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cqz/meter.hpp"
#include "cqz/value.hpp"

namespace cqz {

using VarId = uint32_t;

struct RowRange {
    uint32_t lo = 0;
    uint32_t hi = 0;

    uint32_t size() const { return hi - lo; }
    bool empty() const { return lo >= hi; }
};

/* Open-addressed hash set over the rows of a relation. Load factor is kept
 * at or below 0.7. A membership query charges one work unit. */
class RowHashSet {
public:
    RowHashSet() = default;
    void build(const Value* data, uint32_t arity, uint32_t nrows);
    bool contains(std::span<const Value> row, WorkMeter* m) const;

private:
    uint64_t hash_row(const Value* row) const;

    /* Raw payload pointer: stable under moves of the owning Relation. */
    const Value* data_ = nullptr;
    uint32_t arity_ = 0;
    std::vector<uint32_t> slots_;  // row id + 1, 0 = empty
    uint64_t mask_ = 0;
};

/* Rows sorted lexicographically under a column permutation. Supports prefix
 * lookups, prefix-plus-range counts and ordered scans of the next column.
 * Every binary-search halving step charges one work unit. */
class SortedIndex {
public:
    SortedIndex() = default;
    SortedIndex(const Value* data, uint32_t arity, uint32_t nrows,
                std::vector<uint32_t> cols);

    const std::vector<uint32_t>& cols() const { return cols_; }
    RowRange full() const { return {0, static_cast<uint32_t>(perm_.size())}; }

    /* Value of key column `depth` for the row at sorted position `pos`. */
    Value key_at(uint32_t pos, uint32_t depth) const {
        return data_[static_cast<size_t>(perm_[pos]) * arity_ + cols_[depth]];
    }
    uint32_t row_id(uint32_t pos) const { return perm_[pos]; }

    /* Subrange of `r` whose key column `depth` equals v. */
    RowRange narrow_eq(RowRange r, uint32_t depth, Value v, WorkMeter* m) const;

    /* Subrange of `r` whose key column `depth` lies in [lo, hi] inclusive.
     * An empty interval (lo > hi) yields an empty range. */
    RowRange narrow_range(RowRange r, uint32_t depth, Value lo, Value hi,
                          WorkMeter* m) const;

    struct Seek {
        Value value = kNoValue;  // kNoValue when no key >= target exists
        RowRange eq;             // subrange carrying `value`
    };
    /* Smallest value of key column `depth` within `r` that is >= target. */
    Seek seek(RowRange r, uint32_t depth, Value target, WorkMeter* m) const;

private:
    uint32_t lower(RowRange r, uint32_t depth, Value v, WorkMeter* m) const;
    uint32_t upper(RowRange r, uint32_t depth, Value v, WorkMeter* m) const;

    const Value* data_ = nullptr;
    uint32_t arity_ = 0;
    std::vector<uint32_t> cols_;
    std::vector<uint32_t> perm_;
};

/* A materialized relation bound to a variable schema: the base payload of one
 * hyperedge. Rows are deduplicated and kept in lexicographic order of the
 * natural column order. Immutable once constructed. */
class Relation {
public:
    Relation() = default;
    Relation(std::string name, std::vector<VarId> schema,
             std::vector<Value> flat_rows);
    /* Indexes hold raw pointers into data_; moving is safe (the heap buffer
     * travels along), copying is not. */
    Relation(const Relation&) = delete;
    Relation& operator=(const Relation&) = delete;
    Relation(Relation&&) = default;
    Relation& operator=(Relation&&) = default;

    const std::string& name() const { return name_; }
    uint32_t arity() const { return static_cast<uint32_t>(schema_.size()); }
    const std::vector<VarId>& schema() const { return schema_; }
    uint32_t size() const { return nrows_; }

    std::span<const Value> row(uint32_t i) const {
        return {data_.data() + static_cast<size_t>(i) * arity(), arity()};
    }
    const std::vector<Value>& flat() const { return data_; }

    bool contains(std::span<const Value> row, WorkMeter* m) const {
        return hash_.contains(row, m);
    }

    /* Indexes are declared after construction (their column orders depend on
     * the view that owns this edge) and built once. */
    uint32_t add_index(std::vector<uint32_t> cols);
    const SortedIndex& index(uint32_t id) const { return indexes_.at(id); }

private:
    std::string name_;
    std::vector<VarId> schema_;
    std::vector<Value> data_;
    uint32_t nrows_ = 0;
    RowHashSet hash_;
    std::vector<SortedIndex> indexes_;
};

}  // namespace cqz

#include "cqz/relation.hpp"

#include <algorithm>

#include "cqz/error.hpp"

namespace cqz {

/* ------------------------------------------------------------------ */
/* RowHashSet                                                          */

void RowHashSet::build(const Value* data, uint32_t arity, uint32_t nrows) {
    data_ = data;
    arity_ = arity;
    uint64_t cap = 8;
    while (nrows > cap * 7 / 10) cap <<= 1;
    slots_.assign(cap, 0);
    mask_ = cap - 1;
    for (uint32_t i = 0; i < nrows; ++i) {
        const Value* row = data_ + static_cast<size_t>(i) * arity_;
        uint64_t h = hash_row(row) & mask_;
        while (slots_[h] != 0) h = (h + 1) & mask_;
        slots_[h] = i + 1;
    }
}

uint64_t RowHashSet::hash_row(const Value* row) const {
    uint64_t h = 0x9e3779b97f4a7c15ull;
    for (uint32_t c = 0; c < arity_; ++c) {
        h ^= row[c] + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
    }
    return h;
}

bool RowHashSet::contains(std::span<const Value> row, WorkMeter* m) const {
    tick(m);  // one probe, one unit
    if (slots_.empty()) return false;
    uint64_t h = hash_row(row.data()) & mask_;
    while (slots_[h] != 0) {
        const Value* cand = data_ + static_cast<size_t>(slots_[h] - 1) * arity_;
        if (std::equal(row.begin(), row.end(), cand)) return true;
        h = (h + 1) & mask_;
    }
    return false;
}

/* ------------------------------------------------------------------ */
/* SortedIndex                                                         */

SortedIndex::SortedIndex(const Value* data, uint32_t arity, uint32_t nrows,
                         std::vector<uint32_t> cols)
    : data_(data), arity_(arity), cols_(std::move(cols)) {
    CQZ_CHECK(cols_.size() == arity_, "index must permute all columns");
    perm_.resize(nrows);
    for (uint32_t i = 0; i < nrows; ++i) perm_[i] = i;
    std::sort(perm_.begin(), perm_.end(), [&](uint32_t a, uint32_t b) {
        const Value* ra = data_ + static_cast<size_t>(a) * arity_;
        const Value* rb = data_ + static_cast<size_t>(b) * arity_;
        for (uint32_t c : cols_) {
            if (ra[c] != rb[c]) return ra[c] < rb[c];
        }
        return false;
    });
}

uint32_t SortedIndex::lower(RowRange r, uint32_t depth, Value v,
                            WorkMeter* m) const {
    uint32_t lo = r.lo, hi = r.hi;
    while (lo < hi) {
        tick(m);
        uint32_t mid = lo + (hi - lo) / 2;
        if (key_at(mid, depth) < v)
            lo = mid + 1;
        else
            hi = mid;
    }
    return lo;
}

uint32_t SortedIndex::upper(RowRange r, uint32_t depth, Value v,
                            WorkMeter* m) const {
    uint32_t lo = r.lo, hi = r.hi;
    while (lo < hi) {
        tick(m);
        uint32_t mid = lo + (hi - lo) / 2;
        if (key_at(mid, depth) <= v)
            lo = mid + 1;
        else
            hi = mid;
    }
    return lo;
}

RowRange SortedIndex::narrow_eq(RowRange r, uint32_t depth, Value v,
                                WorkMeter* m) const {
    return {lower(r, depth, v, m), upper(r, depth, v, m)};
}

RowRange SortedIndex::narrow_range(RowRange r, uint32_t depth, Value lo,
                                   Value hi, WorkMeter* m) const {
    if (lo > hi) return {r.lo, r.lo};
    return {lower(r, depth, lo, m), upper(r, depth, hi, m)};
}

SortedIndex::Seek SortedIndex::seek(RowRange r, uint32_t depth, Value target,
                                    WorkMeter* m) const {
    Seek s;
    uint32_t p = lower(r, depth, target, m);
    if (p >= r.hi) return s;
    s.value = key_at(p, depth);
    s.eq = {p, upper({p, r.hi}, depth, s.value, m)};
    return s;
}

/* ------------------------------------------------------------------ */
/* Relation                                                            */

Relation::Relation(std::string name, std::vector<VarId> schema,
                   std::vector<Value> flat_rows)
    : name_(std::move(name)), schema_(std::move(schema)) {
    uint32_t a = arity();
    if (a == 0) {
        /* Nullary relations carry at most the empty tuple; represent it as
         * a row count of 0 or 1 with no payload. */
        nrows_ = flat_rows.empty() ? 0 : 1;
        hash_.build(data_.data(), 0, nrows_);
        return;
    }
    CQZ_CHECK(flat_rows.size() % a == 0, "ragged row payload");
    uint32_t n = static_cast<uint32_t>(flat_rows.size() / a);

    std::vector<uint32_t> ids(n);
    for (uint32_t i = 0; i < n; ++i) ids[i] = i;
    auto cmp = [&](uint32_t x, uint32_t y) {
        const Value* rx = flat_rows.data() + static_cast<size_t>(x) * a;
        const Value* ry = flat_rows.data() + static_cast<size_t>(y) * a;
        return std::lexicographical_compare(rx, rx + a, ry, ry + a);
    };
    auto eq = [&](uint32_t x, uint32_t y) {
        const Value* rx = flat_rows.data() + static_cast<size_t>(x) * a;
        const Value* ry = flat_rows.data() + static_cast<size_t>(y) * a;
        return std::equal(rx, rx + a, ry);
    };
    std::sort(ids.begin(), ids.end(), cmp);
    ids.erase(std::unique(ids.begin(), ids.end(), eq), ids.end());

    data_.reserve(ids.size() * a);
    for (uint32_t id : ids) {
        const Value* r = flat_rows.data() + static_cast<size_t>(id) * a;
        data_.insert(data_.end(), r, r + a);
    }
    nrows_ = static_cast<uint32_t>(ids.size());
    hash_.build(data_.data(), a, nrows_);
}

uint32_t Relation::add_index(std::vector<uint32_t> cols) {
    indexes_.emplace_back(data_.data(), arity(), nrows_, std::move(cols));
    return static_cast<uint32_t>(indexes_.size() - 1);
}

}  // namespace cqz

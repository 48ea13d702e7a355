#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cqz {

/* Dense order-preserving code for a constant. Codes are assigned per database
 * so that raw order (numeric ascending, then byte-lexicographic for strings)
 * is preserved: a < b implies code(a) < code(b). */
using Value = uint32_t;

constexpr Value kNoValue = 0xFFFFFFFFu;

/* A constant as it appears in input files. Integer constants sort before all
 * string constants; the two pools never compare equal. */
struct Raw {
    enum Kind : uint8_t { kInt = 0, kStr = 1 };

    Kind kind = kInt;
    int64_t num = 0;
    std::string str;

    static Raw of_int(int64_t v) {
        Raw r;
        r.kind = kInt;
        r.num = v;
        return r;
    }
    static Raw of_str(std::string s) {
        Raw r;
        r.kind = kStr;
        r.str = std::move(s);
        return r;
    }

    friend bool operator<(const Raw& a, const Raw& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        if (a.kind == kInt) return a.num < b.num;
        return a.str < b.str;
    }
    friend bool operator==(const Raw& a, const Raw& b) {
        if (a.kind != b.kind) return false;
        return a.kind == kInt ? a.num == b.num : a.str == b.str;
    }

    std::string to_string() const;
};

/* The per-database encode/decode table. Built once at ingest from the set of
 * all constants seen; immutable afterwards. */
class ValueDict {
public:
    ValueDict() = default;

    /* `pool` need not be sorted or unique. */
    static ValueDict build(std::vector<Raw> pool);

    size_t size() const { return by_code_.size(); }
    const Raw& decode(Value v) const { return by_code_.at(v); }

    /* Returns kNoValue when the constant was never ingested. */
    Value encode(const Raw& r) const;

    bool operator==(const ValueDict& o) const { return by_code_ == o.by_code_; }

private:
    std::vector<Raw> by_code_;  // sorted; code == position
};

}  // namespace cqz

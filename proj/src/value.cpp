#include "cqz/value.hpp"

#include <algorithm>

namespace cqz {

std::string Raw::to_string() const {
    if (kind == kInt) return std::to_string(num);
    return str;
}

ValueDict ValueDict::build(std::vector<Raw> pool) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    ValueDict d;
    d.by_code_ = std::move(pool);
    return d;
}

Value ValueDict::encode(const Raw& r) const {
    auto it = std::lower_bound(by_code_.begin(), by_code_.end(), r);
    if (it == by_code_.end() || !(*it == r)) return kNoValue;
    return static_cast<Value>(it - by_code_.begin());
}

}  // namespace cqz

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cqz/value.hpp"

namespace cqz {

/* One named base table as ingested: encoded rows, no variable binding yet.
 * Variable schemas are attached later by the view that uses the table. */
struct BaseTable {
    std::string name;
    uint32_t arity = 0;
    std::vector<Value> data;  // flattened, deduplicated, sorted
    uint32_t nrows = 0;

    std::span<const Value> row(uint32_t i) const {
        return {data.data() + static_cast<size_t>(i) * arity, arity};
    }
};

/* Builder-side raw form of a table. Rows of constants, possibly duplicated. */
struct RawTable {
    std::string name;
    uint32_t arity = 0;
    std::vector<Raw> cells;  // row-major
};

class Database {
public:
    /* Shared encode step: collects the constant pool across all tables,
     * builds the order-preserving dictionary, encodes and dedupes rows. */
    static Database from_raw(std::vector<RawTable> tables);

    /* Convenience for programmatic integer data. */
    static Database from_rows(
        const std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>>&
            tables);

    /* Loads every "*.csv" in `dir` (relation name = file stem). Headerless
     * comma-separated rows; a column is numeric iff every value in it parses
     * as a 64-bit signed integer, otherwise byte-lexicographic. */
    static Database load_dir(const std::string& dir);

    const ValueDict& dict() const { return dict_; }
    bool has_table(const std::string& name) const {
        return tables_.count(name) > 0;
    }
    const BaseTable& table(const std::string& name) const;
    const std::map<std::string, BaseTable>& tables() const { return tables_; }

    /* Σ|R| over base tables (the |D| of all space bounds). */
    uint64_t total_tuples() const;

private:
    ValueDict dict_;
    std::map<std::string, BaseTable> tables_;
};

}  // namespace cqz

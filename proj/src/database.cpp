#include "cqz/database.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>

#include "cqz/error.hpp"

namespace cqz {
namespace {

/* Sort + dedupe the flattened rows of one table in place. */
void canonicalize(BaseTable& t) {
    if (t.arity == 0) {
        t.nrows = t.data.empty() ? t.nrows : 1;
        t.data.clear();
        return;
    }
    const uint32_t a = t.arity;
    uint32_t n = static_cast<uint32_t>(t.data.size() / a);
    std::vector<uint32_t> order(n);
    for (uint32_t i = 0; i < n; ++i) order[i] = i;
    auto row = [&](uint32_t i) {
        return std::span<const Value>(t.data.data() + static_cast<size_t>(i) * a, a);
    };
    std::sort(order.begin(), order.end(), [&](uint32_t x, uint32_t y) {
        auto rx = row(x), ry = row(y);
        return std::lexicographical_compare(rx.begin(), rx.end(), ry.begin(),
                                            ry.end());
    });
    std::vector<Value> out;
    out.reserve(t.data.size());
    for (uint32_t k = 0; k < n; ++k) {
        auto r = row(order[k]);
        if (!out.empty() &&
            std::equal(r.begin(), r.end(), out.end() - a, out.end()))
            continue;
        out.insert(out.end(), r.begin(), r.end());
    }
    t.data = std::move(out);
    t.nrows = static_cast<uint32_t>(t.data.size() / a);
}

/* A token is numeric only if it round-trips through int64, so "007" stays a
 * string and cannot collide with "7". */
bool parse_numeric(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) return false;
    return std::to_string(out) == s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

Database Database::from_raw(std::vector<RawTable> tables) {
    std::vector<Raw> pool;
    for (const auto& t : tables) pool.insert(pool.end(), t.cells.begin(), t.cells.end());
    Database db;
    db.dict_ = ValueDict::build(pool);
    for (auto& t : tables) {
        BaseTable bt;
        bt.name = t.name;
        bt.arity = t.arity;
        bt.data.reserve(t.cells.size());
        for (const auto& c : t.cells) {
            Value v = db.dict_.encode(c);
            CQZ_CHECK(v != kNoValue, "dictionary missing ingested constant");
            bt.data.push_back(v);
        }
        if (t.arity == 0 && !t.cells.empty())
            throw data_error("table " + t.name + ": cells present but arity 0");
        if (t.arity == 0)
            bt.nrows = 0;
        canonicalize(bt);
        if (db.tables_.count(bt.name))
            throw data_error("duplicate table name: " + bt.name);
        db.tables_.emplace(bt.name, std::move(bt));
    }
    return db;
}

Database Database::from_rows(
    const std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>>&
        tables) {
    std::vector<RawTable> raw;
    for (const auto& [name, rows] : tables) {
        RawTable t;
        t.name = name;
        t.arity = rows.empty() ? 0 : static_cast<uint32_t>(rows.front().size());
        for (const auto& r : rows) {
            if (r.size() != t.arity)
                throw data_error("table " + name + ": ragged row");
            for (int64_t v : r) t.cells.push_back(Raw::of_int(v));
        }
        raw.push_back(std::move(t));
    }
    return from_raw(std::move(raw));
}

Database Database::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw data_error("not a directory: " + dir);

    /* First pass: read text cells and decide per-column types. */
    struct TextTable {
        std::string name;
        uint32_t arity = 0;
        std::vector<std::string> cells;
    };
    std::vector<TextTable> texts;
    std::vector<fs::path> paths;
    for (const auto& ent : fs::directory_iterator(dir))
        if (ent.is_regular_file() && ent.path().extension() == ".csv")
            paths.push_back(ent.path());
    std::sort(paths.begin(), paths.end());

    for (const auto& p : paths) {
        TextTable t;
        t.name = p.stem().string();
        std::ifstream in(p);
        if (!in) throw data_error("cannot open " + p.string());
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto fields = split_csv_line(line);
            if (t.arity == 0 && t.cells.empty())
                t.arity = static_cast<uint32_t>(fields.size());
            if (fields.size() != t.arity)
                throw data_error(p.string() + ": row with " +
                                 std::to_string(fields.size()) +
                                 " fields, expected " + std::to_string(t.arity));
            for (auto& f : fields) t.cells.push_back(std::move(f));
        }
        texts.push_back(std::move(t));
    }

    std::vector<RawTable> raw;
    for (const auto& t : texts) {
        RawTable rt;
        rt.name = t.name;
        rt.arity = t.arity;
        if (t.arity == 0) {
            raw.push_back(std::move(rt));
            continue;
        }
        uint32_t n = static_cast<uint32_t>(t.cells.size() / t.arity);
        std::vector<bool> numeric(t.arity, true);
        int64_t tmp;
        for (uint32_t i = 0; i < n; ++i)
            for (uint32_t c = 0; c < t.arity; ++c)
                if (numeric[c] &&
                    !parse_numeric(t.cells[static_cast<size_t>(i) * t.arity + c], tmp))
                    numeric[c] = false;
        rt.cells.reserve(t.cells.size());
        for (uint32_t i = 0; i < n; ++i)
            for (uint32_t c = 0; c < t.arity; ++c) {
                const std::string& s = t.cells[static_cast<size_t>(i) * t.arity + c];
                if (numeric[c]) {
                    parse_numeric(s, tmp);
                    rt.cells.push_back(Raw::of_int(tmp));
                } else {
                    rt.cells.push_back(Raw::of_str(s));
                }
            }
        raw.push_back(std::move(rt));
    }
    return from_raw(std::move(raw));
}

const BaseTable& Database::table(const std::string& name) const {
    auto it = tables_.find(name);
    if (it == tables_.end()) throw data_error("unknown table: " + name);
    return it->second;
}

uint64_t Database::total_tuples() const {
    uint64_t n = 0;
    for (const auto& [_, t] : tables_) n += t.nrows;
    return n;
}

}  // namespace cqz

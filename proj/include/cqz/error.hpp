#pragma once

#include <stdexcept>
#include <string>

namespace cqz {

/* Bad input: malformed CSV, unknown relation, arity mismatch, bad view or
 * decomposition text. Maps to exit code 2 in the CLI. */
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

/* API or command-line misuse: invalid flag combinations, out-of-range
 * parameters. Maps to exit code 1 in the CLI. */
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

/* A structural invariant did not hold after construction. This is a bug in
 * the library (or a corrupted index file), not a user mistake. Exit code 3. */
struct invariant_error : std::logic_error {
    explicit invariant_error(const std::string& msg) : std::logic_error(msg) {}
};

#define CQZ_CHECK(cond, msg)                                                   \
    do {                                                                       \
        if (!(cond)) throw ::cqz::invariant_error(msg);                        \
    } while (0)

}  // namespace cqz

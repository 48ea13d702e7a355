#pragma once

#include "cqz/connex.hpp"
#include "cqz/database.hpp"
#include "cqz/rep.hpp"

namespace cqz {

/* Index file layout, all integers little-endian:
 *   magic "CQZ1", version u16,
 *   domain dictionary, view text + free order, cover weights (f64), tau,
 *   tree nodes (level, endpoint codes + flags, split codes, child ids, cost),
 *   dictionary entries.
 * The probe table is rebuilt on load. Byte streams are deterministic, so
 * round-trips are bit-identical. */
std::vector<uint8_t> serialize(const CompressedRep& rep);

/* Rebuilds the rep against `db`, which must encode to the stored domain
 * dictionary (the index carries codes, not constants). Bad magic, version
 * or truncation raise a decode error. */
CompressedRep deserialize(const std::vector<uint8_t>& bytes, const Database& db);

/* Plan files share the magic and carry version 2: the common header, then
 * the decomposition text, the per-bag delay exponents and, per non-root bag,
 * that bag's cover, tau, tree and dictionary (fixup bits included). Bag
 * relations are projections and are rebuilt from the database on load. */
std::vector<uint8_t> serialize(const ConnexPlan& plan);

ConnexPlan deserialize_plan(const std::vector<uint8_t>& bytes,
                            const Database& db);

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace cqz

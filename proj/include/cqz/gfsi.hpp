#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cqz/meter.hpp"
#include "cqz/value.hpp"

namespace cqz {

/* One family of sets over the shared element universe. Sets are addressed by
 * position; elements compare in Value order. Duplicate elements inside a set
 * are dropped at build time. */
struct SetFamily {
    std::vector<std::vector<Value>> sets;
};

/* One set index per family. */
using IntersectionQuery = std::vector<uint32_t>;

struct TupleHash {
    size_t operator()(const std::vector<uint32_t>& t) const {
        size_t h = 1469598103934665603ull;
        for (uint32_t v : t) {
            h ^= v;
            h *= 1099511628211ull;
        }
        return h;
    }
};

/* Node of the (k+1)-ary universe-splitting tree. Every slice is a contiguous
 * run [lo, hi) of universe ranks; the k cut elements sit between consecutive
 * child slices, so a left-to-right walk over children and cuts visits the
 * whole slice in ascending order. A collapsed duplicate cut leaves an empty
 * child slice and a -1 in its extras slot. For every query combination whose
 * sets are all heavy here, `bits` records whether the intersection restricted
 * to the slice is non-empty. */
struct GfsiNode {
    uint32_t lo = 0;
    uint32_t hi = 0;
    uint32_t level = 0;
    std::vector<uint32_t> children;  // k+1 ids, or empty for a leaf
    std::vector<int64_t> extras;     // k slots, universe rank or -1
    std::unordered_map<IntersectionQuery, uint8_t, TupleHash> bits;
};

/* The k-family set-intersection index: sets live as sorted rank runs over a
 * shared sorted universe, the splitting tree halves every family's restricted
 * weight per level, and heavy combinations carry precomputed emptiness bits.
 * A set is heavy at level l when its restriction has at least
 * delta * alpha^l elements. */
class GfsiTree {
public:
    GfsiTree(std::vector<SetFamily> families, double delta, double alpha_split);

    uint32_t k() const { return k_; }
    double delta() const { return delta_; }
    double alpha() const { return alpha_; }
    uint32_t height() const { return height_; }

    const std::vector<Value>& universe() const { return universe_; }
    const std::vector<GfsiNode>& nodes() const { return nodes_; }

    uint32_t num_sets(uint32_t family) const {
        return static_cast<uint32_t>(ranks_[family].size());
    }
    uint64_t set_size(uint32_t family, uint32_t set) const {
        return ranks_[family][set].size();
    }
    uint64_t family_total(uint32_t family) const { return total_[family]; }

    /* Weight of the family restricted to ranks [lo, hi): the sum over its
     * sets of the restricted sizes. */
    uint64_t family_weight(uint32_t family, uint32_t lo, uint32_t hi) const {
        return prefix_[family][hi] - prefix_[family][lo];
    }
    uint64_t restricted_size(uint32_t family, uint32_t set, uint32_t lo,
                             uint32_t hi) const;
    /* Index range into the set's rank array covering universe ranks
     * [lo, hi). */
    std::pair<uint32_t, uint32_t> restricted_range(uint32_t family,
                                                   uint32_t set, uint32_t lo,
                                                   uint32_t hi) const;
    const std::vector<uint32_t>& set_ranks(uint32_t family, uint32_t set) const {
        return ranks_[family][set];
    }
    bool member(uint32_t family, uint32_t set, uint32_t rank) const {
        return hash_[family][set].count(rank) != 0;
    }
    double threshold(uint32_t level) const;

    /* Number of stored heavy-combination bits across all nodes. */
    uint64_t stored_bits() const;

    void validate_query(const IntersectionQuery& q) const;

    /* Non-emptiness of the query intersection restricted to one node, using
     * the node's stored bit when every set is heavy there and a light-set
     * scan otherwise. The root call is the decision procedure. */
    bool probe(uint32_t node, const IntersectionQuery& q, WorkMeter* m) const;

private:
    uint8_t compute_bit(uint32_t node, const IntersectionQuery& q) const;
    bool scan_hit(const GfsiNode& nd, const IntersectionQuery& q,
                  uint32_t family, WorkMeter* m) const;
    uint32_t scan_family(const GfsiNode& nd, const IntersectionQuery& q,
                         bool* do_scan) const;

    uint32_t k_ = 0;
    double delta_ = 1;
    double alpha_ = 0;
    uint32_t height_ = 0;
    std::vector<Value> universe_;
    /* ranks_[i][j]: sorted universe ranks of set j in family i. */
    std::vector<std::vector<std::vector<uint32_t>>> ranks_;
    std::vector<std::vector<std::unordered_set<uint32_t>>> hash_;
    /* prefix_[i][r]: incidences of family i among the first r ranks. */
    std::vector<std::vector<uint64_t>> prefix_;
    std::vector<uint64_t> total_;
    std::vector<GfsiNode> nodes_;

    friend class GfsiStream;
};

/* delta >= 1 is the delay knob; alpha_split = 0 picks the default
 * (k+1)^(1/k)/4, otherwise it must lie in (0, (k+1)^(1/k)/2). */
GfsiTree build_gfsi(std::vector<SetFamily> families, double delta,
                    double alpha_split = 0.0);

/* Ascending, duplicate-free walk of one intersection query, optionally
 * chained across several trees covering consecutive universe slices. */
class GfsiStream {
public:
    std::optional<Value> next();

private:
    friend GfsiStream intersect(const GfsiTree&, IntersectionQuery, WorkMeter*);
    friend class BoundedGfsi;
    GfsiStream(std::vector<const GfsiTree*> parts, IntersectionQuery q,
               WorkMeter* m);

    struct Frame {
        uint32_t node;
        uint32_t step;  // 0 arrival; then odd = child, even = cut element
    };

    void enter_part();

    std::vector<const GfsiTree*> parts_;
    size_t part_ = 0;
    IntersectionQuery q_;
    WorkMeter* m_;
    std::vector<Frame> stack_;
    bool scanning_ = false;
    uint32_t scan_set_family_ = 0;
    uint32_t scan_idx_ = 0;
    uint32_t scan_end_ = 0;
    const std::vector<uint32_t>* scan_ranks_ = nullptr;
    bool done_ = false;
};

GfsiStream intersect(const GfsiTree& tree, IntersectionQuery q,
                     WorkMeter* m = nullptr);
bool intersect_decide(const GfsiTree& tree, const IntersectionQuery& q,
                      WorkMeter* m = nullptr);

/* The bounded-query variant: the universe splits into at most k*beta - 1
 * slices with per-family restricted weight about m_i/beta, each slice gets
 * its own tree, and every registered query keeps the list of slices where it
 * has output. beta = max(1, (prod_i m_i)^(1/k) / (delta |Q|^(1/k))); at
 * beta = 1 the structure degenerates to one plain tree with no lists. */
class BoundedGfsi {
public:
    BoundedGfsi(std::vector<SetFamily> families, double delta,
                const std::vector<IntersectionQuery>& queries,
                double alpha_split);

    double beta() const { return beta_; }
    uint32_t k() const { return k_; }
    double delta() const { return delta_; }
    uint32_t num_slices() const { return static_cast<uint32_t>(trees_.size()); }
    const GfsiTree& slice_tree(uint32_t j) const { return trees_[j]; }
    bool has_lists() const { return !lists_.empty(); }
    const std::vector<uint32_t>& slice_list(const IntersectionQuery& q) const;

    uint64_t stored_bits() const;
    uint64_t list_entries() const;
    uint64_t stored_size() const { return stored_bits() + list_entries(); }

    GfsiStream enumerate(const IntersectionQuery& q, WorkMeter* m = nullptr) const;
    bool decide(const IntersectionQuery& q, WorkMeter* m = nullptr) const;

private:
    uint32_t k_ = 0;
    double delta_ = 1;
    double beta_ = 1;
    std::vector<GfsiTree> trees_;
    std::unordered_map<IntersectionQuery, std::vector<uint32_t>, TupleHash>
        lists_;
};

BoundedGfsi build_gfsi_bounded(std::vector<SetFamily> families, double delta,
                               const std::vector<IntersectionQuery>& queries,
                               double alpha_split = 0.0);

}  // namespace cqz

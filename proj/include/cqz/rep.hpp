#pragma once

#include <memory>

#include "cqz/join.hpp"

namespace cqz {

struct TreeNode {
    uint32_t level = 0;
    FInterval ival;
    std::vector<Value> beta;  // split point; empty for leaves
    int32_t left = -1;
    int32_t right = -1;
    double cost = 0;  // T(I(w)) at build time

    bool is_leaf() const { return beta.empty(); }
};

/* Delay-balanced binary tree over the free grid. Node ids are pre-order,
 * root 0. A node is a leaf exactly when its cost fell strictly below the
 * level threshold; equality keeps splitting. Children exist only for
 * non-empty halves, so a split of a single-point interval leaves a childless
 * node that still carries its split point. */
struct DelayTree {
    std::vector<TreeNode> nodes;
    double tau = 1;
    double alpha = 1;  // slack of the cover over the free variables

    double tau_at(uint32_t level) const;
};

DelayTree build_tree(const PreparedView& pv, const Cover& cover, double tau);

/* Sorted list of bound valuations with T(v_b, I) strictly above the
 * threshold. Candidates are generated per decomposition box by joining the
 * bound parts of the edges (restricted to the box), then each candidate is
 * priced exactly from the count indexes. */
std::vector<Binding> heavy_valuations(const PreparedView& pv, const Cover& cover,
                                      const FInterval& I, double threshold);

/* Bit map over (node, heavy bound valuation). Lookup charges one work unit
 * and returns -1 for absent (the ⊥ of the answering algorithm). */
class HeavyDictionary {
public:
    struct Entry {
        uint32_t node = 0;
        uint32_t off = 0;  // into the valuation pool, vb_arity values
        uint8_t bit = 0;
    };

    void reset(uint32_t vb_arity);
    void insert(uint32_t node, std::span<const Value> vb, uint8_t bit);
    void set_bit(size_t entry_idx, uint8_t bit) { entries_[entry_idx].bit = bit; }
    void finalize();  // builds the probe table; insertions stop here

    int lookup(uint32_t node, std::span<const Value> vb, WorkMeter* m) const;

    size_t size() const { return entries_.size(); }
    uint32_t vb_arity() const { return vb_arity_; }
    const std::vector<Entry>& entries() const { return entries_; }
    const std::vector<Value>& pool() const { return pool_; }
    std::span<const Value> vb_of(const Entry& e) const {
        return {pool_.data() + e.off, vb_arity_};
    }

private:
    uint64_t hash_key(uint32_t node, std::span<const Value> vb) const;

    uint32_t vb_arity_ = 0;
    std::vector<Entry> entries_;
    std::vector<Value> pool_;
    std::vector<uint32_t> table_;  // entry index + 1, 0 empty
    uint64_t mask_ = 0;
};

enum class DictBuildMode { streaming, direct };

/* Entries are inserted per node (ids ascending) in sorted valuation order,
 * initialized to 0; bits flip to 1 when the restricted join witnesses the
 * valuation. `streaming` walks the per-box candidate stream and flips
 * matches found by binary search in the node's heavy list; `direct` settles
 * each entry by its own early-exit join. Both produce identical entries. */
HeavyDictionary build_dictionary(const PreparedView& pv, const DelayTree& tree,
                                 const Cover& cover, DictBuildMode mode);

class CompressedRep;

/* Lexicographic streaming cursor of one access request over the tree and
 * dictionary. Owns its whole traversal state; independent streams never
 * share mutable data. */
class AnswerStream {
public:
    std::optional<std::vector<Value>> next();

private:
    friend class CompressedRep;

    struct Frame {
        uint32_t node = 0;
        int stage = 0;  // 0 enter, 1 after-left, 2 box eval, 3 after-beta
        std::vector<FBox> boxes;
        size_t box_idx = 0;
        std::unique_ptr<GenericJoin> join;
    };

    const CompressedRep* rep_ = nullptr;
    Binding vb_;
    WorkMeter* m_ = nullptr;
    std::vector<Frame> stack_;
    bool boolean_pending_ = false;  // all-bound views bypass the tree
    bool done_ = false;
};

class CompressedRep {
public:
    CompressedRep(PreparedView pv, Cover cover, double tau,
                  DictBuildMode mode = DictBuildMode::streaming);

    /* Deserialization path: adopt prebuilt parts. */
    CompressedRep(PreparedView pv, Cover cover, double tau, DelayTree tree,
                  HeavyDictionary dict);

    const PreparedView& view() const { return pv_; }
    const Cover& cover() const { return cover_; }
    double tau() const { return tau_; }
    const DelayTree& tree() const { return tree_; }
    const HeavyDictionary& dict() const { return dict_; }

    AnswerStream answer(Binding vb, WorkMeter* m) const;

private:
    PreparedView pv_;
    Cover cover_;
    double tau_ = 1;
    DelayTree tree_;
    HeavyDictionary dict_;
};

}  // namespace cqz

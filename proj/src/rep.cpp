#include "cqz/rep.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "cqz/error.hpp"

namespace cqz {

double DelayTree::tau_at(uint32_t level) const {
    return tau / std::pow(2.0, static_cast<double>(level) * (1.0 - 1.0 / alpha));
}

namespace {

/* Narrows the free key columns of a bound-major range to the box. Free ids
 * equal grid positions, so the walk stops at the first full position. */
RowRange narrow_free_by_box(const PreparedView& pv, uint32_t e, RowRange r,
                            uint32_t first_free_depth, const FBox& box) {
    const SortedIndex& ix = pv.bound_major(e);
    const Relation& rel = pv.edge(e);
    for (uint32_t d = first_free_depth; d < rel.arity() && !r.empty(); ++d) {
        uint32_t pos = rel.schema()[ix.cols()[d]];
        if (pos < box.range_pos()) {
            r = ix.narrow_eq(r, d, box.prefix[pos], nullptr);
        } else if (pos == box.range_pos() && box.range) {
            auto b = box_bounds_at(box, pv.grid(), pos);
            if (!b)
                return {r.lo, r.lo};
            r = ix.narrow_range(r, d, b->first, b->second, nullptr);
            break;
        } else {
            break;
        }
    }
    return r;
}

/* Streams every bound valuation v_b whose restriction R_F(v_b, box) is
 * non-empty on all edges, in ascending order: a leapfrog join over the
 * bound columns, with each edge checked against the box as soon as its
 * bound prefix completes. */
void for_each_candidate(const PreparedView& pv, const FBox& box,
                        const std::function<void(const Binding&)>& fn) {
    if (box.empty)
        return;
    const uint32_t mu = pv.mu();
    const uint32_t nb = pv.num_vars() - mu;
    const uint32_t ne = pv.num_edges();

    std::vector<uint32_t> bound_arity(ne, 0);
    std::vector<RowRange> range(ne);
    for (uint32_t e = 0; e < ne; ++e) {
        for (VarId x : pv.edge(e).schema())
            if (!pv.is_free(x))
                ++bound_arity[e];
        range[e] = pv.bound_major(e).full();
        if (bound_arity[e] == 0 &&
            narrow_free_by_box(pv, e, range[e], 0, box).empty())
            return;
    }
    if (nb == 0) {
        fn(Binding{});
        return;
    }

    /* (edge, key depth) pairs per bound variable, in bound order. */
    std::vector<std::vector<std::pair<uint32_t, uint32_t>>> parts(nb);
    for (uint32_t e = 0; e < ne; ++e) {
        const SortedIndex& ix = pv.bound_major(e);
        for (uint32_t d = 0; d < bound_arity[e]; ++d) {
            VarId x = pv.edge(e).schema()[ix.cols()[d]];
            parts[x - mu].push_back({e, d});
        }
    }
    for (uint32_t b = 0; b < nb; ++b)
        CQZ_CHECK(!parts[b].empty(), "bound variable missing from every edge");

    Binding vb(nb);
    std::vector<std::vector<std::pair<uint32_t, RowRange>>> saved(nb);
    auto rec = [&](auto&& self, uint32_t lvl) -> void {
        if (lvl == nb) {
            fn(vb);
            return;
        }
        Value target = 0;
        while (true) {
            bool dead = false, moved = true;
            while (moved && !dead) {
                moved = false;
                for (auto [e, d] : parts[lvl]) {
                    auto s = pv.bound_major(e).seek(range[e], d, target, nullptr);
                    if (s.value == kNoValue) {
                        dead = true;
                        break;
                    }
                    if (s.value > target) {
                        target = s.value;
                        moved = true;
                    }
                }
            }
            if (dead)
                break;
            saved[lvl].clear();
            bool ok = true;
            for (auto [e, d] : parts[lvl]) {
                saved[lvl].push_back({e, range[e]});
                range[e] = pv.bound_major(e).narrow_eq(range[e], d, target, nullptr);
                if (d + 1 == bound_arity[e] &&
                    narrow_free_by_box(pv, e, range[e], bound_arity[e], box).empty())
                    ok = false;
            }
            if (ok) {
                vb[lvl] = target;
                self(self, lvl + 1);
            }
            for (auto& [e, r] : saved[lvl])
                range[e] = r;
            if (target == std::numeric_limits<Value>::max() - 1)
                break;
            ++target;
        }
    };
    rec(rec, 0);
}

}  // namespace

DelayTree build_tree(const PreparedView& pv, const Cover& cover, double tau) {
    if (tau < 1)
        throw data_error("tau must be at least 1");
    validate_cover(pv, cover);
    CQZ_CHECK(pv.mu() > 0,
              "tree construction needs free variables; all-bound views answer "
              "by membership");

    DelayTree t;
    t.tau = tau;
    t.alpha = free_slack(pv, cover);
    Cover uh = hat_cover(pv, cover);

    auto rec = [&](auto&& self, const FInterval& I, uint32_t level) -> int32_t {
        int32_t id = static_cast<int32_t>(t.nodes.size());
        t.nodes.emplace_back();
        t.nodes[id].level = level;
        t.nodes[id].ival = I;
        double cost = cost_interval(pv, uh, I, nullptr, nullptr);
        t.nodes[id].cost = cost;
        if (cost < t.tau_at(level))
            return id;
        std::vector<Value> c = split_interval(pv, uh, I, nullptr);
        t.nodes[id].beta = c;
        FInterval left = closed_left(I, c, pv.grid());
        FInterval right = closed_right(I, c, pv.grid());
        if (!left.is_empty()) {
            int32_t l = self(self, left, level + 1);
            t.nodes[id].left = l;
        }
        if (!right.is_empty()) {
            int32_t r = self(self, right, level + 1);
            t.nodes[id].right = r;
        }
        return id;
    };
    rec(rec, full_interval(pv.grid()), 0);
    return t;
}

std::vector<Binding> heavy_valuations(const PreparedView& pv, const Cover& cover,
                                      const FInterval& I, double threshold) {
    validate_cover(pv, cover);
    Cover uh = hat_cover(pv, cover);
    std::set<Binding> cands;
    for (const FBox& b : box_decompose(I, pv.grid()).boxes)
        for_each_candidate(pv, b, [&](const Binding& vb) { cands.insert(vb); });

    std::vector<Binding> out;
    for (const Binding& vb : cands)
        if (cost_interval(pv, uh, I, &vb, nullptr) > threshold)
            out.push_back(vb);
    return out;  // set iteration keeps the list sorted
}

void HeavyDictionary::reset(uint32_t vb_arity) {
    vb_arity_ = vb_arity;
    entries_.clear();
    pool_.clear();
    table_.clear();
    mask_ = 0;
}

void HeavyDictionary::insert(uint32_t node, std::span<const Value> vb,
                             uint8_t bit) {
    CQZ_CHECK(vb.size() == vb_arity_, "dictionary key arity mismatch");
    Entry e;
    e.node = node;
    e.off = static_cast<uint32_t>(pool_.size());
    e.bit = bit;
    pool_.insert(pool_.end(), vb.begin(), vb.end());
    entries_.push_back(e);
}

uint64_t HeavyDictionary::hash_key(uint32_t node,
                                   std::span<const Value> vb) const {
    uint64_t h = 0x9e3779b97f4a7c15ull ^ node;
    for (Value v : vb) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
    }
    return h;
}

void HeavyDictionary::finalize() {
    size_t cap = 8;
    while (static_cast<double>(entries_.size()) > 0.7 * static_cast<double>(cap))
        cap <<= 1;
    table_.assign(cap, 0);
    mask_ = cap - 1;
    for (size_t i = 0; i < entries_.size(); ++i) {
        uint64_t h = hash_key(entries_[i].node, vb_of(entries_[i])) & mask_;
        while (table_[h] != 0)
            h = (h + 1) & mask_;
        table_[h] = static_cast<uint32_t>(i + 1);
    }
}

int HeavyDictionary::lookup(uint32_t node, std::span<const Value> vb,
                            WorkMeter* m) const {
    tick(m);  // one unit per lookup, independent of probe length
    if (table_.empty())
        return -1;
    uint64_t h = hash_key(node, vb) & mask_;
    while (table_[h] != 0) {
        const Entry& e = entries_[table_[h] - 1];
        std::span<const Value> key = vb_of(e);
        if (e.node == node && std::equal(key.begin(), key.end(), vb.begin(), vb.end()))
            return e.bit;
        h = (h + 1) & mask_;
    }
    return -1;
}

HeavyDictionary build_dictionary(const PreparedView& pv, const DelayTree& tree,
                                 const Cover& cover, DictBuildMode mode) {
    HeavyDictionary dict;
    dict.reset(pv.num_vars() - pv.mu());
    std::vector<uint32_t> all_edges(pv.num_edges());
    std::iota(all_edges.begin(), all_edges.end(), 0u);

    auto nonempty_in_box = [&](const Binding& vb, const FBox& b) {
        if (b.empty)
            return false;
        GenericJoin j(pv, all_edges, &vb, b, nullptr);
        return j.next().has_value();
    };

    for (uint32_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        std::vector<Binding> heavy =
            heavy_valuations(pv, cover, node.ival, tree.tau_at(node.level));
        if (heavy.empty())
            continue;
        size_t start = dict.size();
        for (const Binding& vb : heavy)
            dict.insert(id, vb, 0);
        std::vector<FBox> boxes = box_decompose(node.ival, pv.grid()).boxes;

        if (mode == DictBuildMode::direct) {
            for (size_t i = 0; i < heavy.size(); ++i)
                for (const FBox& b : boxes)
                    if (nonempty_in_box(heavy[i], b)) {
                        dict.set_bit(start + i, 1);
                        break;
                    }
        } else {
            for (const FBox& b : boxes) {
                for_each_candidate(pv, b, [&](const Binding& vb) {
                    auto it = std::lower_bound(heavy.begin(), heavy.end(), vb);
                    if (it == heavy.end() || *it != vb)
                        return;
                    size_t idx = start + static_cast<size_t>(it - heavy.begin());
                    if (dict.entries()[idx].bit)
                        return;
                    if (nonempty_in_box(vb, b))
                        dict.set_bit(idx, 1);
                });
            }
        }
    }
    dict.finalize();
    return dict;
}

std::optional<std::vector<Value>> AnswerStream::next() {
    if (done_)
        return std::nullopt;
    if (boolean_pending_) {
        boolean_pending_ = false;
        done_ = true;
        if (all_bound_membership(rep_->view(), vb_, m_))
            return std::vector<Value>{};
        return std::nullopt;
    }

    const PreparedView& pv = rep_->view();
    std::vector<uint32_t> all_edges(pv.num_edges());
    std::iota(all_edges.begin(), all_edges.end(), 0u);

    while (!stack_.empty()) {
        Frame& f = stack_.back();
        const TreeNode& n = rep_->tree().nodes[f.node];
        switch (f.stage) {
            case 0: {  // enter: one unit per visited node, then the lookup
                tick(m_);
                int d = rep_->dict().lookup(f.node, vb_, m_);
                if (d == 0) {
                    stack_.pop_back();
                    break;
                }
                if (d == 1) {
                    f.stage = 1;
                    int32_t l = n.left;
                    if (l >= 0) {
                        Frame child;
                        child.node = static_cast<uint32_t>(l);
                        stack_.push_back(std::move(child));  // invalidates f
                    }
                    break;
                }
                f.stage = 2;  // absent: evaluate the boxes of this interval
                f.boxes = box_decompose(n.ival, pv.grid()).boxes;
                f.box_idx = 0;
                break;
            }
            case 1: {  // left subtree done; the split point itself
                f.stage = 3;
                if (tuple_in_all_edges(pv, n.beta, vb_, m_))
                    return n.beta;
                break;
            }
            case 3: {  // then the right subtree
                int32_t r = n.right;
                stack_.pop_back();  // invalidates f and the switch target
                if (r >= 0) {
                    Frame child;
                    child.node = static_cast<uint32_t>(r);
                    stack_.push_back(std::move(child));
                }
                break;
            }
            case 2: {  // stream the per-box joins in lexicographic order
                if (f.join) {
                    auto t = f.join->next();
                    if (t)
                        return t;
                    f.join.reset();
                    ++f.box_idx;
                }
                if (f.box_idx >= f.boxes.size()) {
                    stack_.pop_back();
                    break;
                }
                f.join = std::make_unique<GenericJoin>(pv, all_edges, &vb_,
                                                       f.boxes[f.box_idx], m_);
                break;
            }
            default:
                CQZ_CHECK(false, "corrupt answer stream stage");
        }
    }
    done_ = true;
    return std::nullopt;
}

CompressedRep::CompressedRep(PreparedView pv, Cover cover, double tau,
                             DictBuildMode mode)
    : pv_(std::move(pv)), cover_(std::move(cover)), tau_(tau) {
    if (tau_ < 1)
        throw data_error("tau must be at least 1");
    validate_cover(pv_, cover_);
    if (pv_.mu() == 0) {
        /* All head variables bound: requests answer by membership probes and
         * the tree stays empty. */
        tree_.tau = tau_;
        tree_.alpha = 1;
        dict_.reset(pv_.num_vars());
        dict_.finalize();
        return;
    }
    tree_ = build_tree(pv_, cover_, tau_);
    dict_ = build_dictionary(pv_, tree_, cover_, mode);
}

CompressedRep::CompressedRep(PreparedView pv, Cover cover, double tau,
                             DelayTree tree, HeavyDictionary dict)
    : pv_(std::move(pv)),
      cover_(std::move(cover)),
      tau_(tau),
      tree_(std::move(tree)),
      dict_(std::move(dict)) {}

AnswerStream CompressedRep::answer(Binding vb, WorkMeter* m) const {
    if (vb.size() != pv_.num_vars() - pv_.mu())
        throw data_error("access request arity mismatch for view " +
                         pv_.view().name);
    AnswerStream s;
    s.rep_ = this;
    s.vb_ = std::move(vb);
    s.m_ = m;
    if (pv_.mu() == 0) {
        s.boolean_pending_ = true;
        return s;
    }
    if (!tree_.nodes.empty()) {
        AnswerStream::Frame root;
        root.node = 0;
        s.stack_.push_back(std::move(root));
    }
    return s;
}

}  // namespace cqz

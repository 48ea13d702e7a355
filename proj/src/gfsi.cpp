#include "cqz/gfsi.hpp"

#include <algorithm>
#include <cmath>

#include "cqz/error.hpp"

namespace cqz {

namespace {

struct Norm {
    std::vector<Value> universe;
    std::vector<std::vector<std::vector<uint32_t>>> ranks;
    std::vector<std::vector<uint64_t>> prefix;
    std::vector<uint64_t> total;
};

/* Sorts and dedupes every set in place, then rewrites them as runs of ranks
 * into the shared sorted universe, with per-family incidence prefix sums. */
Norm normalize(std::vector<SetFamily>& fams) {
    Norm n;
    for (auto& f : fams)
        for (auto& s : f.sets) {
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
            n.universe.insert(n.universe.end(), s.begin(), s.end());
        }
    std::sort(n.universe.begin(), n.universe.end());
    n.universe.erase(std::unique(n.universe.begin(), n.universe.end()),
                     n.universe.end());
    const size_t nu = n.universe.size();

    n.ranks.resize(fams.size());
    n.prefix.assign(fams.size(), std::vector<uint64_t>(nu + 1, 0));
    n.total.assign(fams.size(), 0);
    for (size_t i = 0; i < fams.size(); ++i) {
        std::vector<uint64_t> count(nu, 0);
        n.ranks[i].reserve(fams[i].sets.size());
        for (const auto& s : fams[i].sets) {
            std::vector<uint32_t> rv;
            rv.reserve(s.size());
            for (Value v : s) {
                uint32_t r = static_cast<uint32_t>(
                    std::lower_bound(n.universe.begin(), n.universe.end(), v) -
                    n.universe.begin());
                rv.push_back(r);
                ++count[r];
            }
            n.total[i] += rv.size();
            n.ranks[i].push_back(std::move(rv));
        }
        for (size_t r = 0; r < nu; ++r)
            n.prefix[i][r + 1] = n.prefix[i][r] + count[r];
    }
    return n;
}

void check_knobs(size_t k, double delta) {
    if (k < 2) throw data_error("need at least two set families");
    if (!(delta >= 1.0)) throw data_error("delta must be at least 1");
}

double pick_alpha(size_t k, double alpha_split) {
    double cap = std::pow(static_cast<double>(k) + 1.0, 1.0 / static_cast<double>(k));
    double a = alpha_split == 0.0 ? cap / 4.0 : alpha_split;
    if (!(a > 0.0 && a < cap / 2.0))
        throw data_error("alpha_split outside the admissible range");
    return a;
}

}  // namespace

GfsiTree::GfsiTree(std::vector<SetFamily> families, double delta,
                   double alpha_split) {
    check_knobs(families.size(), delta);
    k_ = static_cast<uint32_t>(families.size());
    delta_ = delta;
    alpha_ = pick_alpha(k_, alpha_split);

    Norm n = normalize(families);
    universe_ = std::move(n.universe);
    ranks_ = std::move(n.ranks);
    prefix_ = std::move(n.prefix);
    total_ = std::move(n.total);
    hash_.resize(k_);
    for (uint32_t i = 0; i < k_; ++i)
        for (const auto& rv : ranks_[i])
            hash_[i].emplace_back(rv.begin(), rv.end());

    /* Grow the splitting tree. A node splits while every family still has
     * restricted weight above delta; each child slice carries at most half
     * of every family's weight, with the k cut elements held at the node. */
    const uint32_t nu = static_cast<uint32_t>(universe_.size());
    nodes_.push_back(GfsiNode{0, nu, 0, {}, {}, {}});
    std::vector<uint32_t> work{0};
    while (!work.empty()) {
        uint32_t id = work.back();
        work.pop_back();
        uint32_t lo = nodes_[id].lo, hi = nodes_[id].hi;
        uint32_t lev = nodes_[id].level;
        height_ = std::max(height_, lev);
        bool split = true;
        for (uint32_t i = 0; i < k_; ++i)
            if (family_weight(i, lo, hi) <= static_cast<uint64_t>(delta_))
                split = false;
        if (!split) continue;

        std::vector<uint32_t> cuts(k_);
        for (uint32_t i = 0; i < k_; ++i) {
            uint64_t w = family_weight(i, lo, hi);
            uint64_t limit = prefix_[i][lo] + w / 2;
            cuts[i] = static_cast<uint32_t>(
                std::upper_bound(prefix_[i].begin() + lo,
                                 prefix_[i].begin() + hi + 1, limit) -
                prefix_[i].begin() - 1);
        }
        std::sort(cuts.begin(), cuts.end());

        std::vector<std::pair<uint32_t, uint32_t>> slices;
        std::vector<int64_t> extras;
        uint32_t prev = lo;
        for (uint32_t j = 0; j < k_; ++j) {
            slices.emplace_back(prev, std::max(prev, cuts[j]));
            extras.push_back(j == 0 || cuts[j] != cuts[j - 1]
                                 ? static_cast<int64_t>(cuts[j])
                                 : -1);
            prev = cuts[j] + 1;
        }
        slices.emplace_back(prev, hi);

        std::vector<uint32_t> kids;
        for (auto [a, b] : slices) {
            for (uint32_t i = 0; i < k_; ++i)
                CQZ_CHECK(2 * family_weight(i, a, b) <= family_weight(i, lo, hi),
                          "child slice exceeds half the family weight");
            uint32_t cid = static_cast<uint32_t>(nodes_.size());
            nodes_.push_back(GfsiNode{a, b, lev + 1, {}, {}, {}});
            kids.push_back(cid);
            work.push_back(cid);
        }
        nodes_[id].children = std::move(kids);
        nodes_[id].extras = std::move(extras);
    }

    /* Fill the heavy-combination bits bottom-up: children always have larger
     * ids than their parent, so a reverse scan sees them finalized. */
    for (size_t id = nodes_.size(); id-- > 0;) {
        GfsiNode& nd = nodes_[id];
        double thresh = threshold(nd.level);
        std::vector<std::vector<uint32_t>> heavy(k_);
        bool barren = false;
        for (uint32_t i = 0; i < k_; ++i) {
            for (uint32_t j = 0; j < num_sets(i); ++j)
                if (static_cast<double>(restricted_size(i, j, nd.lo, nd.hi)) >=
                    thresh)
                    heavy[i].push_back(j);
            if (heavy[i].empty()) barren = true;
        }
        if (barren) continue;
        IntersectionQuery q(k_);
        std::vector<uint32_t> pos(k_, 0);
        bool more = true;
        while (more) {
            for (uint32_t i = 0; i < k_; ++i) q[i] = heavy[i][pos[i]];
            nd.bits.emplace(q, compute_bit(static_cast<uint32_t>(id), q));
            more = false;
            for (uint32_t i = k_; i-- > 0;) {
                if (++pos[i] < heavy[i].size()) {
                    more = true;
                    break;
                }
                pos[i] = 0;
            }
        }
    }
}

uint64_t GfsiTree::restricted_size(uint32_t family, uint32_t set, uint32_t lo,
                                   uint32_t hi) const {
    auto [a, b] = restricted_range(family, set, lo, hi);
    return b - a;
}

std::pair<uint32_t, uint32_t> GfsiTree::restricted_range(uint32_t family,
                                                         uint32_t set,
                                                         uint32_t lo,
                                                         uint32_t hi) const {
    const auto& rv = ranks_[family][set];
    uint32_t a = static_cast<uint32_t>(
        std::lower_bound(rv.begin(), rv.end(), lo) - rv.begin());
    uint32_t b = static_cast<uint32_t>(
        std::lower_bound(rv.begin(), rv.end(), hi) - rv.begin());
    return {a, b};
}

double GfsiTree::threshold(uint32_t level) const {
    return delta_ * std::pow(alpha_, static_cast<double>(level));
}

uint64_t GfsiTree::stored_bits() const {
    uint64_t n = 0;
    for (const auto& nd : nodes_) n += nd.bits.size();
    return n;
}

void GfsiTree::validate_query(const IntersectionQuery& q) const {
    if (q.size() != k_)
        throw data_error("intersection query arity does not match the family count");
    for (uint32_t i = 0; i < k_; ++i)
        if (q[i] >= num_sets(i))
            throw data_error("intersection query set index out of range");
}

/* The family whose restriction to the node is smallest; *do_scan is set when
 * the node must be answered by scanning it (a light set, a leaf, or an empty
 * restriction) rather than by the stored bit. */
uint32_t GfsiTree::scan_family(const GfsiNode& nd, const IntersectionQuery& q,
                               bool* do_scan) const {
    uint64_t best = UINT64_MAX;
    uint32_t fam = 0;
    for (uint32_t i = 0; i < k_; ++i) {
        uint64_t s = restricted_size(i, q[i], nd.lo, nd.hi);
        if (s < best) {
            best = s;
            fam = i;
        }
    }
    *do_scan = nd.children.empty() ||
               static_cast<double>(best) < threshold(nd.level);
    return fam;
}

bool GfsiTree::scan_hit(const GfsiNode& nd, const IntersectionQuery& q,
                        uint32_t family, WorkMeter* m) const {
    auto [a, b] = restricted_range(family, q[family], nd.lo, nd.hi);
    const auto& rv = ranks_[family][q[family]];
    for (uint32_t idx = a; idx < b; ++idx) {
        uint32_t r = rv[idx];
        bool all = true;
        for (uint32_t i = 0; i < k_; ++i) {
            if (i == family) continue;
            tick(m);
            if (!member(i, q[i], r)) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

bool GfsiTree::probe(uint32_t node, const IntersectionQuery& q,
                     WorkMeter* m) const {
    const GfsiNode& nd = nodes_[node];
    tick(m, 1 + k_);
    bool do_scan = false;
    uint32_t fam = scan_family(nd, q, &do_scan);
    if (do_scan) return scan_hit(nd, q, fam, m);
    tick(m);
    auto it = nd.bits.find(q);
    CQZ_CHECK(it != nd.bits.end(), "heavy combination missing its stored bit");
    return it->second != 0;
}

uint8_t GfsiTree::compute_bit(uint32_t node, const IntersectionQuery& q) const {
    const GfsiNode& nd = nodes_[node];
    bool do_scan = false;
    uint32_t fam = scan_family(nd, q, &do_scan);
    if (do_scan) return scan_hit(nd, q, fam, nullptr) ? 1 : 0;
    for (uint32_t c : nd.children)
        if (probe(c, q, nullptr)) return 1;
    for (int64_t e : nd.extras) {
        if (e < 0) continue;
        bool all = true;
        for (uint32_t i = 0; i < k_; ++i)
            if (!member(i, q[i], static_cast<uint32_t>(e))) {
                all = false;
                break;
            }
        if (all) return 1;
    }
    return 0;
}

GfsiTree build_gfsi(std::vector<SetFamily> families, double delta,
                    double alpha_split) {
    return GfsiTree(std::move(families), delta, alpha_split);
}

GfsiStream::GfsiStream(std::vector<const GfsiTree*> parts, IntersectionQuery q,
                       WorkMeter* m)
    : parts_(std::move(parts)), q_(std::move(q)), m_(m) {
    if (parts_.empty())
        done_ = true;
    else
        enter_part();
}

void GfsiStream::enter_part() {
    stack_.clear();
    scanning_ = false;
    stack_.push_back(Frame{0, 0});
}

std::optional<Value> GfsiStream::next() {
    while (!done_) {
        const GfsiTree& t = *parts_[part_];
        if (scanning_) {
            while (scan_idx_ < scan_end_) {
                uint32_t r = (*scan_ranks_)[scan_idx_++];
                bool all = true;
                for (uint32_t i = 0; i < t.k_; ++i) {
                    if (i == scan_set_family_) continue;
                    tick(m_);
                    if (!t.member(i, q_[i], r)) {
                        all = false;
                        break;
                    }
                }
                if (all) return t.universe_[r];
            }
            scanning_ = false;
            stack_.pop_back();
            continue;
        }
        if (stack_.empty()) {
            if (++part_ >= parts_.size()) {
                done_ = true;
                break;
            }
            enter_part();
            continue;
        }
        Frame& f = stack_.back();
        const GfsiNode& nd = t.nodes_[f.node];
        if (f.step == 0) {
            tick(m_, 1 + t.k_);
            bool do_scan = false;
            uint32_t fam = t.scan_family(nd, q_, &do_scan);
            if (do_scan) {
                auto [a, b] = t.restricted_range(fam, q_[fam], nd.lo, nd.hi);
                scanning_ = true;
                scan_set_family_ = fam;
                scan_ranks_ = &t.ranks_[fam][q_[fam]];
                scan_idx_ = a;
                scan_end_ = b;
                continue;
            }
            tick(m_);
            auto it = nd.bits.find(q_);
            CQZ_CHECK(it != nd.bits.end(),
                      "heavy combination missing its stored bit");
            if (it->second == 0) {
                stack_.pop_back();
                continue;
            }
            f.step = 1;
            continue;
        }
        uint32_t s = f.step++;
        if (s > 2 * t.k_ + 1) {
            stack_.pop_back();
            continue;
        }
        if (s % 2 == 1) {
            stack_.push_back(Frame{nd.children[(s - 1) / 2], 0});
            continue;
        }
        int64_t e = nd.extras[s / 2 - 1];
        if (e < 0) continue;
        bool all = true;
        for (uint32_t i = 0; i < t.k_; ++i) {
            tick(m_);
            if (!t.member(i, q_[i], static_cast<uint32_t>(e))) {
                all = false;
                break;
            }
        }
        if (all) return t.universe_[static_cast<uint32_t>(e)];
    }
    return std::nullopt;
}

GfsiStream intersect(const GfsiTree& tree, IntersectionQuery q, WorkMeter* m) {
    tree.validate_query(q);
    return GfsiStream({&tree}, std::move(q), m);
}

bool intersect_decide(const GfsiTree& tree, const IntersectionQuery& q,
                      WorkMeter* m) {
    tree.validate_query(q);
    return tree.probe(0, q, m);
}

BoundedGfsi::BoundedGfsi(std::vector<SetFamily> families, double delta,
                         const std::vector<IntersectionQuery>& queries,
                         double alpha_split) {
    check_knobs(families.size(), delta);
    k_ = static_cast<uint32_t>(families.size());
    delta_ = delta;
    if (queries.empty())
        throw data_error("bounded index needs a non-empty query set");
    for (const auto& q : queries) {
        if (q.size() != k_)
            throw data_error(
                "intersection query arity does not match the family count");
        for (uint32_t i = 0; i < k_; ++i)
            if (q[i] >= families[i].sets.size())
                throw data_error("intersection query set index out of range");
    }

    Norm n = normalize(families);
    double prod = 1;
    for (uint64_t t : n.total) prod *= static_cast<double>(t);
    beta_ = std::max(1.0, std::pow(prod, 1.0 / k_) /
                              (delta * std::pow(static_cast<double>(queries.size()),
                                                1.0 / k_)));
    if (beta_ <= 1.0 + 1e-12) {
        beta_ = 1.0;
        trees_.emplace_back(std::move(families), delta, alpha_split);
        return;
    }

    /* Cut the universe wherever any family's running weight crosses a
     * multiple of m_i/beta: at most ceil(beta)-1 cuts per family, so at most
     * k*ceil(beta)-1 slices. A slice can exceed m_i/beta only by the weight
     * of the single element that jumped the multiple. */
    const uint32_t nu = static_cast<uint32_t>(n.universe.size());
    uint32_t nb = static_cast<uint32_t>(std::ceil(beta_ - 1e-9));
    std::vector<uint32_t> breaks;
    for (uint32_t i = 0; i < k_; ++i) {
        if (n.total[i] == 0) continue;
        double target = static_cast<double>(n.total[i]) / beta_;
        for (uint32_t j = 1; j < nb; ++j) {
            double w = j * target;
            uint32_t r = static_cast<uint32_t>(
                std::upper_bound(n.prefix[i].begin(), n.prefix[i].end(),
                                 static_cast<uint64_t>(w)) -
                n.prefix[i].begin());
            if (r >= 1 && r < nu) breaks.push_back(r);
        }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    std::vector<std::pair<uint32_t, uint32_t>> slices;
    uint32_t prev = 0;
    for (uint32_t b : breaks) {
        slices.emplace_back(prev, b);
        prev = b;
    }
    slices.emplace_back(prev, nu);

    std::vector<uint32_t> slice_of(nu, 0);
    for (uint32_t j = 0; j < slices.size(); ++j)
        for (uint32_t r = slices[j].first; r < slices[j].second; ++r)
            slice_of[r] = j;

    for (auto [a, b] : slices) {
        std::vector<SetFamily> part(k_);
        for (uint32_t i = 0; i < k_; ++i) {
            part[i].sets.resize(n.ranks[i].size());
            for (size_t j = 0; j < n.ranks[i].size(); ++j) {
                const auto& rv = n.ranks[i][j];
                auto lo = std::lower_bound(rv.begin(), rv.end(), a);
                auto hi = std::lower_bound(rv.begin(), rv.end(), b);
                for (auto it = lo; it != hi; ++it)
                    part[i].sets[j].push_back(n.universe[*it]);
            }
        }
        trees_.emplace_back(std::move(part), delta, alpha_split);
    }

    /* Exact per-query slice lists: walk the query's smallest set and probe
     * the other families. */
    std::vector<std::vector<std::unordered_set<uint32_t>>> hash(k_);
    for (uint32_t i = 0; i < k_; ++i)
        for (const auto& rv : n.ranks[i]) hash[i].emplace_back(rv.begin(), rv.end());
    for (const auto& q : queries) {
        if (lists_.count(q)) continue;
        uint32_t fam = 0;
        uint64_t best = UINT64_MAX;
        for (uint32_t i = 0; i < k_; ++i)
            if (n.ranks[i][q[i]].size() < best) {
                best = n.ranks[i][q[i]].size();
                fam = i;
            }
        std::vector<uint8_t> seen(slices.size(), 0);
        for (uint32_t r : n.ranks[fam][q[fam]]) {
            bool all = true;
            for (uint32_t i = 0; i < k_; ++i) {
                if (i == fam) continue;
                if (!hash[i][q[i]].count(r)) {
                    all = false;
                    break;
                }
            }
            if (all) seen[slice_of[r]] = 1;
        }
        std::vector<uint32_t> list;
        for (uint32_t j = 0; j < seen.size(); ++j)
            if (seen[j]) list.push_back(j);
        lists_.emplace(q, std::move(list));
    }
}

const std::vector<uint32_t>& BoundedGfsi::slice_list(
    const IntersectionQuery& q) const {
    auto it = lists_.find(q);
    if (it == lists_.end())
        throw data_error("intersection query is not in the registered query set");
    return it->second;
}

uint64_t BoundedGfsi::stored_bits() const {
    uint64_t n = 0;
    for (const auto& t : trees_) n += t.stored_bits();
    return n;
}

uint64_t BoundedGfsi::list_entries() const {
    uint64_t n = 0;
    for (const auto& [q, l] : lists_) n += l.size();
    return n;
}

GfsiStream BoundedGfsi::enumerate(const IntersectionQuery& q,
                                  WorkMeter* m) const {
    trees_[0].validate_query(q);
    if (!has_lists()) return GfsiStream({&trees_[0]}, q, m);
    tick(m);
    std::vector<const GfsiTree*> parts;
    for (uint32_t j : slice_list(q)) parts.push_back(&trees_[j]);
    return GfsiStream(std::move(parts), q, m);
}

bool BoundedGfsi::decide(const IntersectionQuery& q, WorkMeter* m) const {
    trees_[0].validate_query(q);
    if (!has_lists()) return trees_[0].probe(0, q, m);
    tick(m);
    return !slice_list(q).empty();
}

BoundedGfsi build_gfsi_bounded(std::vector<SetFamily> families, double delta,
                               const std::vector<IntersectionQuery>& queries,
                               double alpha_split) {
    return BoundedGfsi(std::move(families), delta, queries, alpha_split);
}

}  // namespace cqz

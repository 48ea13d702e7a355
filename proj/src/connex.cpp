#include "cqz/connex.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "cqz/error.hpp"
#include "cqz/interval.hpp"
#include "cqz/optimize.hpp"

namespace cqz {
namespace {

std::vector<uint32_t> sorted_unique(std::vector<uint32_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

bool contains_var(const std::vector<uint32_t>& sorted, uint32_t v) {
    return std::binary_search(sorted.begin(), sorted.end(), v);
}

uint32_t rank_of(const std::vector<uint32_t>& sorted, uint32_t v) {
    return static_cast<uint32_t>(
        std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
}

std::string var_set_text(const Hypergraph& hg, const std::vector<uint32_t>& vs) {
    std::string s = "{";
    for (size_t i = 0; i < vs.size(); ++i) {
        if (i) s += ", ";
        s += hg.vars[vs[i]];
    }
    s += "}";
    return s;
}

/* Cover instance of one bag: its atom projections over its variable set.
 * Sizes, when given, are the original atom cardinalities (projections are
 * never larger, so bounds stated through them stay valid). */
CoverInstance bag_instance(const Hypergraph& hg, const DecompBag& bag,
                           std::span<const uint64_t> edge_sizes) {
    (void)hg;
    CoverInstance inst;
    inst.var_edges.resize(bag.vars.size());
    inst.free_var.assign(bag.vars.size(), 0);
    for (uint32_t v : bag.free_vars) inst.free_var[rank_of(bag.vars, v)] = 1;
    uint64_t total = 0;
    for (size_t j = 0; j < bag.edge_ids.size(); ++j) {
        uint64_t s = 1;
        if (!edge_sizes.empty()) s = std::max<uint64_t>(edge_sizes[bag.edge_ids[j]], 1);
        total += s;
        inst.log_size.push_back(std::log(static_cast<double>(s)));
        for (uint32_t v : bag.edge_vars[j])
            inst.var_edges[rank_of(bag.vars, v)].push_back(
                static_cast<uint32_t>(j));
    }
    inst.log_total = std::log(static_cast<double>(std::max<uint64_t>(total, 1)));
    return inst;
}

}  // namespace

Hypergraph Hypergraph::of_view(const AdornedView& view) {
    Hypergraph hg;
    hg.vars = view.head;
    for (size_t i = 0; i < view.head.size(); ++i)
        hg.bound.push_back(view.is_bound(i) ? 1 : 0);
    for (const RewrittenAtom& a : view.atoms) {
        std::vector<uint32_t> e;
        for (const std::string& v : a.vars) e.push_back(hg.var_index(v));
        hg.edges.push_back(sorted_unique(std::move(e)));
    }
    return hg;
}

uint32_t Hypergraph::var_index(const std::string& name) const {
    for (uint32_t i = 0; i < vars.size(); ++i)
        if (vars[i] == name) return i;
    throw data_error("variable '" + name + "' is not in the view head");
}

ConnexDecomposition::ConnexDecomposition(
    Hypergraph hg, const std::vector<std::vector<uint32_t>>& bag_vars,
    const std::vector<int32_t>& parent)
    : hg_(std::move(hg)) {
    size_t n = bag_vars.size();
    if (n == 0) throw data_error("decomposition has no bags");
    if (parent.size() != n)
        throw data_error("decomposition needs one parent entry per bag");

    std::vector<std::vector<uint32_t>> chi(n);
    for (size_t i = 0; i < n; ++i) {
        for (uint32_t v : bag_vars[i])
            if (v >= hg_.num_vars())
                throw data_error("bag variable id out of range");
        chi[i] = sorted_unique(bag_vars[i]);
    }

    int32_t root_in = -1;
    std::vector<std::vector<uint32_t>> kids(n);
    for (size_t i = 0; i < n; ++i) {
        if (parent[i] < 0) {
            if (root_in >= 0) throw data_error("decomposition has two root bags");
            root_in = static_cast<int32_t>(i);
        } else if (static_cast<size_t>(parent[i]) >= n ||
                   parent[i] == static_cast<int32_t>(i)) {
            throw data_error("bag parent out of range");
        } else {
            kids[parent[i]].push_back(static_cast<uint32_t>(i));
        }
    }
    if (root_in < 0) throw data_error("decomposition has no root bag");
    {
        std::vector<uint32_t> todo{static_cast<uint32_t>(root_in)};
        std::vector<uint8_t> seen(n, 0);
        seen[root_in] = 1;
        size_t reached = 1;
        while (!todo.empty()) {
            uint32_t i = todo.back();
            todo.pop_back();
            for (uint32_t c : kids[i])
                if (!seen[c]) {
                    seen[c] = 1;
                    ++reached;
                    todo.push_back(c);
                }
        }
        if (reached != n) throw data_error("decomposition is not a tree");
    }

    std::vector<uint32_t> vb;
    for (uint32_t v = 0; v < hg_.num_vars(); ++v)
        if (hg_.bound[v]) vb.push_back(v);

    /* The root region: every bag lying inside the bound set. It must cover
     * the bound set and sit connected in the input tree; it collapses into a
     * single root bag whose variables are exactly the bound ones. */
    std::vector<uint8_t> in_a(n, 0);
    std::vector<uint32_t> a_members;
    std::vector<uint32_t> covered;
    for (size_t i = 0; i < n; ++i) {
        bool inside = true;
        for (uint32_t v : chi[i])
            if (!contains_var(vb, v)) inside = false;
        if (inside) {
            in_a[i] = 1;
            a_members.push_back(static_cast<uint32_t>(i));
            covered.insert(covered.end(), chi[i].begin(), chi[i].end());
        }
    }
    if (!vb.empty() && sorted_unique(std::move(covered)) != vb)
        throw data_error("the bags inside the bound set do not cover it");
    if (a_members.size() >= 2) {
        std::vector<uint32_t> todo{a_members[0]};
        std::vector<uint8_t> seen(n, 0);
        seen[a_members[0]] = 1;
        size_t reached = 1;
        while (!todo.empty()) {
            uint32_t i = todo.back();
            todo.pop_back();
            auto step = [&](uint32_t j) {
                if (in_a[j] && !seen[j]) {
                    seen[j] = 1;
                    ++reached;
                    todo.push_back(j);
                }
            };
            if (parent[i] >= 0) step(static_cast<uint32_t>(parent[i]));
            for (uint32_t c : kids[i]) step(c);
        }
        if (reached != a_members.size())
            throw data_error("the bags inside the bound set are not connected");
    }

    /* Neighbors of the collapsed root, and of every surviving bag. With no
     * bag inside the bound set the root is synthesized above the input root. */
    std::vector<std::vector<uint32_t>> nbr(n);
    std::vector<uint32_t> root_nbr;
    for (size_t i = 0; i < n; ++i) {
        if (parent[i] < 0) continue;
        uint32_t p = static_cast<uint32_t>(parent[i]);
        if (in_a[i] && in_a[p]) continue;
        if (in_a[i]) {
            root_nbr.push_back(p);
        } else if (in_a[p]) {
            root_nbr.push_back(static_cast<uint32_t>(i));
        } else {
            nbr[i].push_back(p);
            nbr[p].push_back(static_cast<uint32_t>(i));
        }
    }
    if (a_members.empty()) root_nbr.push_back(static_cast<uint32_t>(root_in));
    root_nbr = sorted_unique(std::move(root_nbr));
    for (auto& v : nbr) v = sorted_unique(std::move(v));

    DecompBag root;
    root.vars = vb;
    bags_.push_back(std::move(root));
    std::vector<int32_t> placed(n, -1);
    auto dfs = [&](auto&& self, uint32_t in_id, uint32_t new_parent) -> void {
        uint32_t id = static_cast<uint32_t>(bags_.size());
        placed[in_id] = static_cast<int32_t>(id);
        DecompBag b;
        b.vars = chi[in_id];
        b.parent = static_cast<int32_t>(new_parent);
        bags_[new_parent].children.push_back(id);
        bags_.push_back(std::move(b));
        for (uint32_t j : nbr[in_id])
            if (placed[j] < 0) self(self, j, id);
    };
    for (uint32_t j : root_nbr)
        if (placed[j] < 0) dfs(dfs, j, 0);
    size_t expect = 1 + (n - a_members.size());
    CQZ_CHECK(bags_.size() == expect, "bag contraction lost a bag");

    for (size_t t = 0; t < bags_.size(); ++t)
        bags_[t].predecessor = t <= 1 ? -1 : static_cast<int32_t>(t - 1);

    /* Split each bag against the union of its ancestors. The root's
     * variables count as bound outright: the request supplies them. */
    bags_[0].bound_vars = vb;
    {
        std::vector<uint8_t> anc(hg_.num_vars(), 0);
        auto walk = [&](auto&& self, uint32_t t) -> void {
            std::vector<uint32_t> marked;
            for (uint32_t v : bags_[t].vars) {
                if (t != 0) {
                    if (anc[v])
                        bags_[t].bound_vars.push_back(v);
                    else
                        bags_[t].free_vars.push_back(v);
                }
                if (!anc[v]) {
                    anc[v] = 1;
                    marked.push_back(v);
                }
            }
            for (uint32_t c : bags_[t].children) self(self, c);
            for (uint32_t v : marked) anc[v] = 0;
        };
        walk(walk, 0);
    }

    /* Tree-decomposition laws, checked on the collapsed tree: connected
     * occurrence of every variable, every atom inside some bag. */
    {
        std::vector<uint32_t> tops(hg_.num_vars(), 0);
        std::vector<uint32_t> occurs(hg_.num_vars(), 0);
        for (size_t t = 0; t < bags_.size(); ++t)
            for (uint32_t v : bags_[t].vars) {
                ++occurs[v];
                if (t == 0 || !contains_var(bags_[bags_[t].parent].vars, v))
                    ++tops[v];
            }
        for (uint32_t v = 0; v < hg_.num_vars(); ++v)
            if (occurs[v] > 0 && tops[v] != 1)
                throw data_error("variable '" + hg_.vars[v] +
                                 "' appears in disconnected bags");
    }
    for (const auto& e : hg_.edges) {
        bool inside = false;
        for (const auto& b : bags_) {
            bool all = true;
            for (uint32_t v : e)
                if (!contains_var(b.vars, v)) all = false;
            if (all) inside = true;
        }
        if (!inside)
            throw data_error("atom variables " + var_set_text(hg_, e) +
                             " are not inside any bag");
    }

    for (auto& b : bags_) {
        for (uint32_t e = 0; e < hg_.num_edges(); ++e) {
            std::vector<uint32_t> proj;
            for (uint32_t v : hg_.edges[e])
                if (contains_var(b.vars, v)) proj.push_back(v);
            if (proj.empty()) continue;
            b.edge_ids.push_back(e);
            b.edge_vars.push_back(std::move(proj));
        }
    }

    size_t free_total = 0;
    for (const auto& b : bags_) free_total += b.free_vars.size();
    size_t unbound = hg_.num_vars() - vb.size();
    std::vector<uint8_t> present(hg_.num_vars(), 0);
    for (const auto& b : bags_)
        for (uint32_t v : b.vars) present[v] = 1;
    size_t present_unbound = 0;
    for (uint32_t v = 0; v < hg_.num_vars(); ++v)
        if (!hg_.bound[v] && present[v]) ++present_unbound;
    CQZ_CHECK(free_total == present_unbound,
              "free variables must split across the bags");
    (void)unbound;
}

std::string ConnexDecomposition::to_text() const {
    std::string out;
    for (size_t t = 0; t < bags_.size(); ++t) {
        out += "bag " + std::to_string(t) + ": " + var_set_text(hg_, bags_[t].vars);
        if (bags_[t].parent >= 0)
            out += " parent: " + std::to_string(bags_[t].parent);
        out += "\n";
    }
    return out;
}

ConnexDecomposition load_decomposition(const std::string& text,
                                       const AdornedView& view) {
    Hypergraph hg = Hypergraph::of_view(view);

    auto is_ident = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    };
    struct Entry {
        std::vector<uint32_t> vars;
        int32_t parent = -1;
        bool set = false;
    };
    std::map<uint32_t, Entry> entries;

    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;

        size_t i = 0;
        auto ws = [&] {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        };
        auto bad = [&]() -> data_error {
            return data_error("bad decomposition line: " + line);
        };
        auto lit = [&](const std::string& w) {
            ws();
            if (line.compare(i, w.size(), w) != 0) throw bad();
            i += w.size();
        };
        auto number = [&]() -> uint32_t {
            ws();
            size_t s = i;
            while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])))
                ++i;
            if (i == s || i - s > 9) throw bad();
            return static_cast<uint32_t>(std::stoul(line.substr(s, i - s)));
        };

        ws();
        if (i == line.size() || line[i] == '#') continue;
        lit("bag");
        uint32_t id = number();
        lit(":");
        lit("{");
        Entry ent;
        ent.set = true;
        ws();
        if (i < line.size() && line[i] != '}') {
            for (;;) {
                ws();
                size_t s = i;
                while (i < line.size() && is_ident(line[i])) ++i;
                if (i == s) throw bad();
                ent.vars.push_back(hg.var_index(line.substr(s, i - s)));
                ws();
                if (i < line.size() && line[i] == ',') {
                    ++i;
                    continue;
                }
                break;
            }
        }
        lit("}");
        ws();
        if (i < line.size()) {
            lit("parent");
            lit(":");
            ent.parent = static_cast<int32_t>(number());
            ws();
            if (i != line.size()) throw bad();
        }
        if (entries.count(id)) throw data_error("duplicate bag id in decomposition");
        entries[id] = std::move(ent);
    }
    if (entries.empty()) throw data_error("decomposition has no bags");

    size_t n = entries.size();
    std::vector<std::vector<uint32_t>> bag_vars(n);
    std::vector<int32_t> parent(n, -1);
    for (auto& [id, ent] : entries) {
        if (id >= n)
            throw data_error("bag ids must run 0.." + std::to_string(n - 1) +
                             " without gaps");
        bag_vars[id] = std::move(ent.vars);
        parent[id] = ent.parent;
    }
    return ConnexDecomposition(std::move(hg), bag_vars, parent);
}

WidthReport delta_width(const ConnexDecomposition& d,
                        std::span<const double> delta,
                        std::span<const uint64_t> edge_sizes) {
    const Hypergraph& hg = d.graph();
    if (delta.size() != d.num_bags())
        throw data_error("one delay exponent per bag expected");
    for (double x : delta)
        if (!(x >= 0))
            throw data_error("delay exponents must be non-negative");
    if (delta[0] > 1e-9)
        throw data_error("the root bag carries no delay budget");
    if (!edge_sizes.empty() && edge_sizes.size() != hg.num_edges())
        throw data_error("one edge size per atom expected");

    WidthReport rep;
    rep.bags.resize(d.num_bags());
    std::vector<double> depth(d.num_bags(), 0);
    for (uint32_t t = 1; t < d.num_bags(); ++t) {
        const DecompBag& bag = d.bag(t);
        depth[t] = depth[bag.parent] + delta[t];
        rep.h = std::max(rep.h, depth[t]);
        CoverInstance inst = bag_instance(hg, bag, edge_sizes);
        DiscountedCover dc = discounted_cover(inst, delta[t]);
        BagCover& bc = rep.bags[t];
        bc.u = std::move(dc.u);
        bc.alpha = dc.alpha;
        bc.rho_plus = dc.exponent;
        for (double u : bc.u) bc.weight += u;
        rep.f = std::max(rep.f, bc.rho_plus);
        rep.u_star = std::max(rep.u_star, bc.weight);
    }
    return rep;
}

ConnexDecomposition search_decomposition(const Hypergraph& hg, uint32_t limit) {
    std::vector<uint32_t> free_vars, vb;
    for (uint32_t v = 0; v < hg.num_vars(); ++v)
        (hg.bound[v] ? vb : free_vars).push_back(v);
    if (free_vars.size() > limit)
        throw usage_error("exhaustive decomposition search is limited to " +
                          std::to_string(limit) +
                          " free variables; provide a decomposition");
    if (hg.num_vars() > 64)
        throw usage_error("decomposition search supports at most 64 variables");

    if (free_vars.empty()) {
        std::vector<std::vector<uint32_t>> bags{vb};
        return ConnexDecomposition(hg, bags, {-1});
    }

    std::vector<uint64_t> edge_mask(hg.num_edges(), 0);
    std::vector<uint64_t> adj(hg.num_vars(), 0);
    for (uint32_t e = 0; e < hg.num_edges(); ++e) {
        for (uint32_t v : hg.edges[e]) edge_mask[e] |= uint64_t(1) << v;
        for (uint32_t v : hg.edges[e]) adj[v] |= edge_mask[e];
    }

    /* Exact fractional cover of one candidate bag, cached by variable set. */
    std::map<uint64_t, double> memo;
    auto rho_star = [&](uint64_t mask) {
        auto it = memo.find(mask);
        if (it != memo.end()) return it->second;
        CoverInstance inst;
        std::vector<uint32_t> vars;
        for (uint32_t v = 0; v < hg.num_vars(); ++v)
            if (mask & (uint64_t(1) << v)) vars.push_back(v);
        inst.var_edges.resize(vars.size());
        inst.free_var.assign(vars.size(), 1);
        for (uint32_t e = 0; e < hg.num_edges(); ++e) {
            if (!(edge_mask[e] & mask)) continue;
            uint32_t j = inst.num_edges();
            inst.log_size.push_back(0);
            for (size_t p = 0; p < vars.size(); ++p)
                if (edge_mask[e] & (uint64_t(1) << vars[p]))
                    inst.var_edges[p].push_back(j);
        }
        double r = discounted_cover(inst, 0).exponent;
        memo[mask] = r;
        return r;
    };

    size_t k = free_vars.size();
    std::vector<uint32_t> perm = free_vars;
    double best = std::numeric_limits<double>::infinity();
    std::vector<uint64_t> best_bags;
    std::vector<uint32_t> best_perm;
    do {
        uint64_t remaining = 0;
        for (uint32_t v = 0; v < hg.num_vars(); ++v) remaining |= uint64_t(1) << v;
        std::vector<uint64_t> adj2 = adj;
        std::vector<uint64_t> bags(k, 0);
        double worst = 0;
        bool viable = true;
        for (size_t i = 0; i < k; ++i) {
            uint32_t v = perm[i];
            uint64_t b = (adj2[v] & remaining) | (uint64_t(1) << v);
            bags[i] = b;
            worst = std::max(worst, rho_star(b));
            if (worst >= best - 1e-9) {
                viable = false;
                break;
            }
            remaining &= ~(uint64_t(1) << v);
            uint64_t nb = b & remaining;
            for (uint32_t w = 0; w < hg.num_vars(); ++w)
                if (nb & (uint64_t(1) << w)) adj2[w] |= nb;
        }
        if (viable) {
            best = worst;
            best_bags = bags;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    CQZ_CHECK(!best_bags.empty(), "decomposition search found no candidate");

    std::vector<std::vector<uint32_t>> bag_vars(k + 1);
    std::vector<int32_t> parent(k + 1, -1);
    bag_vars[0] = vb;
    for (size_t i = 0; i < k; ++i) {
        for (uint32_t v = 0; v < hg.num_vars(); ++v)
            if (best_bags[i] & (uint64_t(1) << v)) bag_vars[i + 1].push_back(v);
        parent[i + 1] = 0;
        for (size_t j = i + 1; j < k; ++j)
            if (best_bags[i] & (uint64_t(1) << best_perm[j])) {
                parent[i + 1] = static_cast<int32_t>(j + 1);
                break;
            }
    }
    return ConnexDecomposition(hg, bag_vars, parent);
}

BagParameters optimal_bag_parameters(const ConnexDecomposition& d,
                                     std::span<const uint64_t> edge_sizes,
                                     double budget, BagBudget kind) {
    const Hypergraph& hg = d.graph();
    if (edge_sizes.size() != hg.num_edges())
        throw data_error("one edge size per atom expected");

    uint64_t largest = 1;
    for (uint64_t s : edge_sizes) largest = std::max(largest, s);
    double denom = std::log(static_cast<double>(largest));

    BagParameters out;
    out.delta.assign(d.num_bags(), 0);
    out.u.resize(d.num_bags());
    out.alpha.assign(d.num_bags(), 0);
    out.tau.assign(d.num_bags(), 1);
    for (uint32_t t = 1; t < d.num_bags(); ++t) {
        CoverInstance inst = bag_instance(hg, d.bag(t), edge_sizes);
        double log_tau = 0;
        if (kind == BagBudget::space) {
            DelayChoice c = min_delay_cover(inst, budget);
            out.u[t] = std::move(c.u);
            out.alpha[t] = c.alpha;
            out.tau[t] = c.tau;
            log_tau = c.log_tau;
        } else {
            SpaceChoice c = min_space_cover(inst, budget);
            out.u[t] = std::move(c.u);
            out.alpha[t] = c.alpha;
            out.tau[t] = c.tau;
            log_tau = std::log(std::max(c.tau, 1.0));
        }
        out.delta[t] = denom > 0 ? log_tau / denom : 0;
    }
    std::vector<double> depth(d.num_bags(), 0);
    for (uint32_t t = 1; t < d.num_bags(); ++t) {
        depth[t] = depth[d.bag(t).parent] + out.delta[t];
        out.height = std::max(out.height, depth[t]);
    }
    return out;
}

AdornedView bag_view(const ConnexDecomposition& d, uint32_t t) {
    CQZ_CHECK(t >= 1 && t < d.num_bags(), "bag id out of range");
    const Hypergraph& hg = d.graph();
    const DecompBag& bag = d.bag(t);
    std::string text = "bag" + std::to_string(t) + "^";
    text.append(bag.free_vars.size(), 'f');
    text.append(bag.bound_vars.size(), 'b');
    text += "(";
    bool first = true;
    for (uint32_t v : bag.free_vars) {
        if (!first) text += ", ";
        first = false;
        text += hg.vars[v];
    }
    for (uint32_t v : bag.bound_vars) {
        if (!first) text += ", ";
        first = false;
        text += hg.vars[v];
    }
    text += ") :- ";
    for (size_t j = 0; j < bag.edge_ids.size(); ++j) {
        if (j) text += ", ";
        text += "p" + std::to_string(bag.edge_ids[j]) + "(";
        for (size_t i = 0; i < bag.edge_vars[j].size(); ++i) {
            if (i) text += ", ";
            text += hg.vars[bag.edge_vars[j][i]];
        }
        text += ")";
    }
    text += ".";
    return parse_adorned_view(text);
}

PreparedView prepare_bag(const ConnexDecomposition& d, uint32_t t,
                         const PreparedView& whole) {
    AdornedView av = bag_view(d, t);
    const DecompBag& bag = d.bag(t);
    std::vector<EdgePayload> payloads;
    for (size_t j = 0; j < bag.edge_ids.size(); ++j) {
        const Relation& rel = whole.edge(bag.edge_ids[j]);
        std::vector<uint32_t> cols;
        for (uint32_t v : bag.edge_vars[j]) {
            VarId wid = whole.var_id(d.var_name(v));
            uint32_t c = 0;
            while (c < rel.arity() && rel.schema()[c] != wid) ++c;
            CQZ_CHECK(c < rel.arity(), "bag projection column missing");
            cols.push_back(c);
        }
        EdgePayload pl;
        pl.flat.reserve(static_cast<size_t>(rel.size()) * cols.size());
        for (uint32_t r = 0; r < rel.size(); ++r) {
            auto row = rel.row(r);
            for (uint32_t c : cols) pl.flat.push_back(row[c]);
        }
        payloads.push_back(std::move(pl));
    }
    return PreparedView(av, whole.dict(), whole.dsize(), std::move(payloads));
}

ConnexPlan::ConnexPlan(PreparedView whole, ConnexDecomposition decomp,
                       std::vector<double> delta,
                       std::vector<CompressedRep> reps, WidthReport width)
    : whole_(std::move(whole)),
      decomp_(std::move(decomp)),
      delta_(std::move(delta)),
      reps_(std::move(reps)),
      width_(std::move(width)) {
    const Hypergraph& hg = decomp_.graph();
    CQZ_CHECK(delta_.size() == decomp_.num_bags(), "one delay exponent per bag");
    CQZ_CHECK(reps_.size() + 1 == decomp_.num_bags(), "one rep per non-root bag");

    for (uint32_t e = 0; e < whole_.num_edges(); ++e) {
        bool all_bound = true;
        for (VarId x : whole_.edge(e).schema())
            if (whole_.is_free(x)) all_bound = false;
        if (all_bound) root_edges_.push_back(e);
    }

    for (uint32_t t = 1; t < decomp_.num_bags(); ++t)
        for (uint32_t v : decomp_.bag(t).free_vars)
            free_order_.push_back(hg.vars[v]);
    CQZ_CHECK(free_order_.size() == whole_.mu(),
              "plan columns must cover the free variables");
    for (uint32_t i = 0; i < whole_.mu(); ++i)
        CQZ_CHECK(whole_.var_name(i) == free_order_[i],
                  "whole view must be prepared in plan column order");

    std::vector<uint32_t> vb_pos(hg.num_vars(), 0);
    uint32_t nb = 0;
    for (uint32_t v = 0; v < hg.num_vars(); ++v)
        if (hg.bound[v]) vb_pos[v] = nb++;
    std::vector<ValueSrc> owner(hg.num_vars());
    std::vector<uint8_t> owned(hg.num_vars(), 0);
    for (uint32_t t = 1; t < decomp_.num_bags(); ++t) {
        const auto& fv = decomp_.bag(t).free_vars;
        for (uint32_t r = 0; r < fv.size(); ++r) {
            owner[fv[r]] = ValueSrc{t, r};
            owned[fv[r]] = 1;
        }
    }
    bound_src_.resize(decomp_.num_bags());
    for (uint32_t t = 1; t < decomp_.num_bags(); ++t) {
        const DecompBag& bag = decomp_.bag(t);
        CQZ_CHECK(reps_[t - 1].view().mu() == bag.free_vars.size(),
                  "bag rep shape mismatch");
        CQZ_CHECK(reps_[t - 1].view().num_vars() ==
                      bag.free_vars.size() + bag.bound_vars.size(),
                  "bag rep shape mismatch");
        for (uint32_t v : bag.bound_vars) {
            if (hg.bound[v]) {
                bound_src_[t].push_back(ValueSrc{0, vb_pos[v]});
            } else {
                CQZ_CHECK(owned[v], "bag bound variable has no source");
                bound_src_[t].push_back(owner[v]);
            }
        }
    }
}

PlanStream ConnexPlan::answer(Binding vb, WorkMeter* m) const {
    if (vb.size() != whole_.num_vars() - whole_.mu())
        throw data_error("access request arity mismatch for view " +
                         whole_.view().name);
    PlanStream s;
    s.plan_ = this;
    s.vb_ = std::move(vb);
    s.m_ = m;
    s.cur_.resize(decomp_.num_bags());
    for (uint32_t e : root_edges_) {
        std::vector<Value> row;
        for (VarId x : whole_.edge(e).schema()) row.push_back(s.vb_[x - whole_.mu()]);
        if (!whole_.edge(e).contains(row, m)) {
            s.done_ = true;
            return s;
        }
    }
    if (decomp_.num_bags() == 1) {
        s.empty_pending_ = true;
        return s;
    }
    s.pos_ = 1;
    s.cur_[1].fresh = true;
    return s;
}

Binding PlanStream::bag_binding(uint32_t t) const {
    const auto& src = plan_->bound_src_[t];
    Binding b;
    b.reserve(src.size());
    for (const auto& s : src)
        b.push_back(s.bag == 0 ? vb_[s.pos] : cur_[s.bag].val[s.pos]);
    return b;
}

std::optional<std::vector<Value>> PlanStream::next() {
    if (done_) return std::nullopt;
    if (empty_pending_) {
        empty_pending_ = false;
        done_ = true;
        return std::vector<Value>{};
    }
    uint32_t last = plan_->decomp_.num_bags() - 1;
    for (;;) {
        tick(m_);
        BagCursor& c = cur_[pos_];
        if (c.fresh) {
            c.stream.emplace(plan_->bag_rep(pos_).answer(bag_binding(pos_), m_));
            c.fresh = false;
            c.visited = false;
        }
        auto t = c.stream->next();
        if (t) {
            c.visited = true;
            c.val = std::move(*t);
            if (pos_ == last) {
                std::vector<Value> out;
                out.reserve(plan_->whole_.mu());
                for (uint32_t b = 1; b <= last; ++b)
                    out.insert(out.end(), cur_[b].val.begin(), cur_[b].val.end());
                if (tuple_in_all_edges(plan_->whole_, out, vb_, m_)) return out;
                continue;
            }
            ++pos_;
            cur_[pos_].fresh = true;
            continue;
        }
        if (!c.visited) {
            /* Empty on arrival: the bag's request came from strict ancestors,
             * so no sibling value can revive it. Resume at the parent. */
            int32_t p = plan_->decomp_.bag(pos_).parent;
            if (p <= 0) {
                done_ = true;
                return std::nullopt;
            }
            pos_ = static_cast<uint32_t>(p);
        } else {
            c.visited = false;
            if (pos_ == 1) {
                done_ = true;
                return std::nullopt;
            }
            --pos_;
        }
    }
}

namespace {

/* Clears every dictionary bit of bag `t` whose heavy valuations all fail to
 * reach some child: a bit survives only if one tuple of the bag joins, under
 * the entry's bound values, into a nonempty stream of every child rep. */
void fixup_bag(const ConnexDecomposition& d, uint32_t t, const PreparedView& pv,
               const DelayTree& tree, HeavyDictionary& dict,
               const std::vector<std::optional<CompressedRep>>& built) {
    const DecompBag& bag = d.bag(t);
    if (bag.children.empty() || dict.size() == 0) return;

    struct Src {
        bool from_free;
        uint32_t idx;
    };
    std::vector<std::vector<Src>> child_src;
    for (uint32_t c : bag.children) {
        std::vector<Src> srcs;
        for (uint32_t v : d.bag(c).bound_vars) {
            if (contains_var(bag.free_vars, v)) {
                srcs.push_back(Src{true, rank_of(bag.free_vars, v)});
            } else {
                CQZ_CHECK(contains_var(bag.bound_vars, v),
                          "child request variable missing from the parent bag");
                srcs.push_back(Src{false, rank_of(bag.bound_vars, v)});
            }
        }
        child_src.push_back(std::move(srcs));
    }

    std::vector<uint32_t> all_edges(pv.num_edges());
    for (uint32_t e = 0; e < pv.num_edges(); ++e) all_edges[e] = e;

    for (size_t i = 0; i < dict.size(); ++i) {
        const HeavyDictionary::Entry& ent = dict.entries()[i];
        if (!ent.bit) continue;
        auto vbs = dict.vb_of(ent);
        Binding vb(vbs.begin(), vbs.end());
        bool witness = false;
        BoxDecomposition boxes =
            box_decompose(tree.nodes[ent.node].ival, pv.grid());
        for (const FBox& box : boxes.boxes) {
            if (box.empty) continue;
            GenericJoin gj(pv, all_edges, &vb, box, nullptr);
            while (auto k = gj.next()) {
                bool all_pass = true;
                for (size_t ci = 0; ci < bag.children.size(); ++ci) {
                    Binding cb;
                    cb.reserve(child_src[ci].size());
                    for (const Src& s : child_src[ci])
                        cb.push_back(s.from_free ? (*k)[s.idx] : vb[s.idx]);
                    AnswerStream as =
                        built[bag.children[ci]]->answer(std::move(cb), nullptr);
                    if (!as.next()) {
                        all_pass = false;
                        break;
                    }
                }
                if (all_pass) {
                    witness = true;
                    break;
                }
            }
            if (witness) break;
        }
        if (!witness) dict.set_bit(i, 0);
    }
}

}  // namespace

ConnexPlan build_plan(const Database& db, const AdornedView& view,
                      const ConnexDecomposition& decomp,
                      std::span<const double> delta) {
    Hypergraph hgv = Hypergraph::of_view(view);
    const Hypergraph& hg = decomp.graph();
    if (hgv.vars != hg.vars || hgv.bound != hg.bound || hgv.edges != hg.edges)
        throw data_error("decomposition does not match the view");

    std::vector<double> dl(delta.begin(), delta.end());
    if (dl.empty()) dl.assign(decomp.num_bags(), 0.0);

    /* The whole view is prepared with its free variables in plan column
     * order, so emitted tuples line up with its own enumeration order. */
    AdornedView ordered = view;
    std::vector<std::string> order;
    for (uint32_t t = 1; t < decomp.num_bags(); ++t)
        for (uint32_t v : decomp.bag(t).free_vars)
            order.push_back(decomp.var_name(v));
    if (!order.empty()) reorder_free(ordered, order);
    PreparedView whole(ordered, db);

    std::vector<uint64_t> sizes;
    for (uint32_t e = 0; e < whole.num_edges(); ++e)
        sizes.push_back(whole.edge(e).size());
    WidthReport width = delta_width(decomp, dl, sizes);

    uint32_t n = decomp.num_bags();
    double dsz = static_cast<double>(db.total_tuples());

    struct BagParts {
        PreparedView pv;
        Cover c;
        double tau;
        DelayTree tree;
        HeavyDictionary dict;
    };
    std::vector<std::optional<CompressedRep>> built(n);
    std::vector<std::optional<BagParts>> parts(n);
    for (uint32_t t = 1; t < n; ++t) {
        PreparedView pv = prepare_bag(decomp, t, whole);
        Cover c{width.bags[t].u};
        validate_cover(pv, c);
        double tau = std::max(1.0, std::ceil(std::pow(dsz, dl[t]) - 1e-9));
        if (pv.mu() == 0) {
            built[t].emplace(std::move(pv), std::move(c), tau);
        } else {
            DelayTree tree = build_tree(pv, c, tau);
            HeavyDictionary dict =
                build_dictionary(pv, tree, c, DictBuildMode::streaming);
            parts[t].emplace(BagParts{std::move(pv), std::move(c), tau,
                                      std::move(tree), std::move(dict)});
        }
    }
    /* Children first: a bag's bits are settled against its children's final
     * representations before its own parent inspects it. */
    for (uint32_t t = n; t-- > 1;) {
        if (!parts[t]) continue;
        BagParts& bp = *parts[t];
        fixup_bag(decomp, t, bp.pv, bp.tree, bp.dict, built);
        built[t].emplace(std::move(bp.pv), std::move(bp.c), bp.tau,
                         std::move(bp.tree), std::move(bp.dict));
        parts[t].reset();
    }

    std::vector<CompressedRep> reps;
    reps.reserve(n - 1);
    for (uint32_t t = 1; t < n; ++t) reps.push_back(std::move(*built[t]));
    return ConnexPlan(std::move(whole), decomp, std::move(dl), std::move(reps),
                      std::move(width));
}

}  // namespace cqz

#include "cqz/join.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cqz/error.hpp"

namespace cqz {
namespace {

uint32_t edge_bound_arity(const PreparedView& pv, uint32_t e) {
    uint32_t n = 0;
    for (VarId x : pv.edge(e).schema())
        if (!pv.is_free(x)) ++n;
    return n;
}

}  // namespace

GenericJoin::GenericJoin(const PreparedView& pv, std::vector<uint32_t> edges,
                         const Binding* binding, FBox box, WorkMeter* m)
    : pv_(pv),
      edges_(std::move(edges)),
      binding_(binding ? *binding : Binding{}),
      box_(std::move(box)),
      m_(m) {
    const uint32_t mu = pv_.mu();
    uint32_t nbound = pv_.num_vars() - mu;
    CQZ_CHECK(binding_.size() == nbound,
              "generic join needs a total binding of the bound variables");

    range_.assign(pv_.num_edges(), RowRange{});
    at_.assign(mu, {});
    saved_.assign(mu, {});
    if (box_.empty) {
        exhausted_ = true;
        return;
    }
    for (uint32_t e : edges_) {
        const SortedIndex& ix = pv_.bound_major(e);
        RowRange r = ix.full();
        uint32_t nb = edge_bound_arity(pv_, e);
        for (uint32_t d = 0; d < nb && !r.empty(); ++d) {
            VarId x = pv_.edge(e).schema()[ix.cols()[d]];
            r = ix.narrow_eq(r, d, binding_[x - mu], m_);
        }
        range_[e] = r;
        if (r.empty()) {
            exhausted_ = true;
            return;
        }
        for (uint32_t d = nb; d < pv_.edge(e).arity(); ++d) {
            VarId x = pv_.edge(e).schema()[ix.cols()[d]];
            at_[x].push_back({e, d});
        }
    }
}

std::optional<Value> GenericJoin::first_candidate(uint32_t level, Value from) {
    auto bounds = box_bounds_at(box_, pv_.grid(), level);
    if (!bounds) return std::nullopt;
    Value target = std::max(from, bounds->first);
    if (target > bounds->second) return std::nullopt;

    if (at_[level].empty()) {
        /* No selected edge mentions this variable: walk its axis. */
        const auto& vals = pv_.grid().axes[level].values;
        auto it = std::lower_bound(vals.begin(), vals.end(), target);
        tick(m_);
        if (it == vals.end() || *it > bounds->second) return std::nullopt;
        return *it;
    }

    bool moved = true;
    while (moved) {
        moved = false;
        for (const Participant& p : at_[level]) {
            const SortedIndex& ix = pv_.bound_major(p.edge);
            auto s = ix.seek(range_[p.edge], p.depth, target, m_);
            if (s.value == kNoValue) return std::nullopt;
            if (s.value > target) {
                target = s.value;
                if (target > bounds->second) return std::nullopt;
                moved = true;
            }
        }
    }
    return target;
}

bool GenericJoin::descend(Value v) {
    auto& undo_list = saved_[level_];
    undo_list.clear();
    for (const Participant& p : at_[level_]) {
        undo_list.emplace_back(p.edge, range_[p.edge]);
        const SortedIndex& ix = pv_.bound_major(p.edge);
        range_[p.edge] = ix.narrow_eq(range_[p.edge], p.depth, v, m_);
        CQZ_CHECK(!range_[p.edge].empty(), "candidate vanished while narrowing");
    }
    tuple_[level_] = v;
    ++level_;
    return true;
}

std::optional<std::vector<Value>> GenericJoin::next() {
    if (exhausted_) return std::nullopt;
    const uint32_t mu = pv_.mu();
    if (mu == 0) {
        exhausted_ = true;
        return std::vector<Value>{};
    }
    Value from = 0;
    if (fresh_) {
        fresh_ = false;
        level_ = 0;
        tuple_.assign(mu, 0);
    } else {
        --level_;
        for (auto& [e, r] : saved_[level_]) range_[e] = r;
        from = tuple_[level_] + 1;
    }
    while (true) {
        auto v = first_candidate(level_, from);
        if (v) {
            descend(*v);
            if (level_ == mu) return tuple_;
            from = 0;
        } else {
            if (level_ == 0) {
                exhausted_ = true;
                return std::nullopt;
            }
            --level_;
            for (auto& [e, r] : saved_[level_]) range_[e] = r;
            from = tuple_[level_] + 1;
        }
    }
}

std::vector<std::vector<Value>> brute_force_answer(
    const Database& db, const AdornedView& view,
    const std::vector<Value>& binding) {
    /* Fix bound head variables from the binding. */
    std::map<std::string, Value> fixed;
    size_t bi = 0;
    for (size_t i = 0; i < view.head.size(); ++i)
        if (view.is_bound(i)) {
            if (bi >= binding.size())
                throw data_error("binding too short for view " + view.name);
            fixed[view.head[i]] = binding[bi++];
        }
    if (bi != binding.size())
        throw data_error("binding too long for view " + view.name);

    /* Per-atom row sets over the base tables, plus encoded constants. */
    struct AtomData {
        const Atom* atom;
        std::set<std::vector<Value>> rows;
        bool unsat = false;
    };
    std::vector<AtomData> atoms;
    for (const Atom& a : view.body) {
        AtomData ad;
        ad.atom = &a;
        if (!db.has_table(a.rel)) throw data_error("unknown relation: " + a.rel);
        const BaseTable& t = db.table(a.rel);
        if (t.arity != a.terms.size()) {
            if (t.nrows == 0)
                ad.unsat = true;
            else
                throw data_error("relation " + a.rel + " arity mismatch");
        } else {
            for (uint32_t i = 0; i < t.nrows; ++i) {
                auto r = t.row(i);
                ad.rows.insert({r.begin(), r.end()});
            }
        }
        atoms.push_back(std::move(ad));
    }

    /* Unfixed variables: free head variables first (the output order), then
     * existential body-only variables. Candidates come from the first column
     * a variable occurs in. */
    std::vector<std::string> unfixed;
    for (size_t i = 0; i < view.head.size(); ++i)
        if (!view.is_bound(i)) unfixed.push_back(view.head[i]);
    size_t num_free = unfixed.size();
    for (const Atom& a : view.body)
        for (const Term& t : a.terms)
            if (const std::string* v = std::get_if<std::string>(&t))
                if (!fixed.count(*v) &&
                    std::find(unfixed.begin(), unfixed.end(), *v) == unfixed.end())
                    unfixed.push_back(*v);

    std::vector<std::vector<Value>> candidates;
    for (const std::string& var : unfixed) {
        std::set<Value> vals;
        bool found = false;
        for (const Atom& a : view.body) {
            if (found) break;
            const BaseTable& t = db.table(a.rel);
            if (t.arity != a.terms.size()) continue;
            for (size_t col = 0; col < a.terms.size() && !found; ++col) {
                const std::string* v = std::get_if<std::string>(&a.terms[col]);
                if (!v || *v != var) continue;
                for (uint32_t i = 0; i < t.nrows; ++i) vals.insert(t.row(i)[col]);
                found = true;
            }
        }
        candidates.emplace_back(vals.begin(), vals.end());
    }

    std::map<std::string, Value> assign = fixed;
    std::vector<std::vector<Value>> out;
    std::vector<size_t> pick(unfixed.size(), 0);

    auto atoms_hold = [&]() {
        for (const AtomData& ad : atoms) {
            if (ad.unsat) return false;
            std::vector<Value> row;
            for (const Term& t : ad.atom->terms) {
                if (const Raw* c = std::get_if<Raw>(&t)) {
                    Value enc = db.dict().encode(*c);
                    if (enc == kNoValue) return false;
                    row.push_back(enc);
                } else {
                    row.push_back(assign.at(std::get<std::string>(t)));
                }
            }
            if (!ad.rows.count(row)) return false;
        }
        return true;
    };

    /* Odometer over the candidate product. */
    size_t depth = 0;
    bool done = unfixed.empty();
    if (done) {
        if (atoms_hold()) out.push_back({});
    }
    while (!done) {
        if (depth == unfixed.size()) {
            if (atoms_hold()) {
                std::vector<Value> t;
                for (size_t i = 0; i < num_free; ++i)
                    t.push_back(assign.at(unfixed[i]));
                out.push_back(std::move(t));
            }
            --depth;
            ++pick[depth];
            continue;
        }
        if (pick[depth] >= candidates[depth].size()) {
            pick[depth] = 0;
            if (depth == 0) break;
            --depth;
            ++pick[depth];
            continue;
        }
        assign[unfixed[depth]] = candidates[depth][pick[depth]];
        ++depth;
    }

    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::vector<Value>> brute_force_answer(
    const Database& db, const AdornedView& view, const std::vector<Raw>& binding) {
    std::vector<Value> enc;
    for (const Raw& r : binding) enc.push_back(db.dict().encode(r));
    return brute_force_answer(db, view, enc);
}

bool tuple_in_all_edges(const PreparedView& pv, std::span<const Value> free_vals,
                        const Binding& binding, WorkMeter* m) {
    std::vector<Value> row;
    for (uint32_t e = 0; e < pv.num_edges(); ++e) {
        const Relation& rel = pv.edge(e);
        row.clear();
        for (VarId x : rel.schema())
            row.push_back(pv.is_free(x) ? free_vals[x] : binding[x - pv.mu()]);
        if (!rel.contains(row, m)) return false;
    }
    return true;
}

bool all_bound_membership(const PreparedView& pv, const Binding& binding,
                          WorkMeter* m) {
    CQZ_CHECK(pv.mu() == 0, "all-bound membership needs an all-bound view");
    return tuple_in_all_edges(pv, {}, binding, m);
}

}  // namespace cqz

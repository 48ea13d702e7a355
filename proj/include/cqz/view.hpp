#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cqz/database.hpp"
#include "cqz/relation.hpp"
#include "cqz/value.hpp"

namespace cqz {

/* A body-atom term before rewriting: a variable name or a constant. */
using Term = std::variant<std::string, Raw>;

struct Atom {
    std::string rel;
    std::vector<Term> terms;
};

/* Symbolic form of one rewritten atom: the base relation, the distinct
 * variables in first-occurrence order, and the selection that realizes
 * constants and repeated variables when the relation is materialized. */
struct RewrittenAtom {
    std::string rel;
    std::vector<std::string> vars;       // distinct, first occurrence order
    std::vector<uint32_t> keep_cols;     // base column per kept variable
    std::vector<std::pair<uint32_t, Raw>> const_eq;   // base col == constant
    std::vector<std::pair<uint32_t, uint32_t>> col_eq;  // equal base columns
};

struct AdornedView {
    std::string name;
    std::vector<std::string> head;  // head variable names, declared order
    std::string adorn;              // one of 'b'/'f' per head variable
    std::vector<Atom> body;         // as written
    std::vector<RewrittenAtom> atoms;  // constants/repeats eliminated
    std::string source_text;

    bool is_bound(size_t head_pos) const { return adorn[head_pos] == 'b'; }
    /* True when every body variable appears in the head. */
    bool is_full() const;
};

/* Grammar: NAME^ADORN(vars) :- Atom, Atom, ... .
 * ADORN ∈ {b,f}^k matches head variables positionally; constants are bare
 * integers or single-quoted strings. */
AdornedView parse_adorned_view(const std::string& text);

/* Permutes the head in place so the free variables appear in the given
 * order (bound positions keep their places). The enumeration order and the
 * output column order follow the free order. `order` must list exactly the
 * free head variables. */
void reorder_free(AdornedView& view, const std::vector<std::string>& order);

/* Sorted active domain of one free variable (value codes). Interval
 * coordinates index into this list. */
struct GridAxis {
    std::vector<Value> values;

    uint32_t size() const { return static_cast<uint32_t>(values.size()); }
    Value at(uint32_t i) const { return values[i]; }
    /* Index of v, or nullopt if v is not on the axis. */
    std::optional<uint32_t> index_of(Value v) const;
};

struct FreeGrid {
    std::vector<GridAxis> axes;  // one per free variable, free order

    uint32_t dims() const { return static_cast<uint32_t>(axes.size()); }
    bool any_axis_empty() const;
};

/* Pre-encoded rows for one atom, used when a view is assembled from already
 * materialized relations (bag-local views share the global dictionary). */
struct EdgePayload {
    std::vector<Value> flat;
};

/* A view bound to a database: materialized per-atom relations with variable
 * schemas, both sorted key orders, and the free-variable grid. Variable ids
 * are assigned free-first: 0..mu-1 are V_f in declared order, the rest V_b. */
class PreparedView {
public:
    PreparedView(const AdornedView& view, const Database& db);

    /* Assembles the view from per-atom payloads already in dictionary codes,
     * aligned with view.atoms. The view must be constant/repeat free. */
    PreparedView(const AdornedView& view, ValueDict dict, uint64_t dsize,
                 std::vector<EdgePayload> payloads);

    const AdornedView& view() const { return view_; }
    const ValueDict& dict() const { return dict_; }
    uint64_t dsize() const { return dsize_; }

    uint32_t num_vars() const { return static_cast<uint32_t>(var_names_.size()); }
    uint32_t mu() const { return mu_; }
    bool is_free(VarId x) const { return x < mu_; }
    const std::string& var_name(VarId x) const { return var_names_[x]; }
    VarId var_id(const std::string& name) const;

    uint32_t num_edges() const { return static_cast<uint32_t>(edges_.size()); }
    const Relation& edge(uint32_t e) const { return edges_[e]; }
    /* Columns sorted free vars first (free order) then bound vars. */
    const SortedIndex& free_major(uint32_t e) const {
        return edges_[e].index(free_major_[e]);
    }
    /* Columns sorted bound vars first then free vars. */
    const SortedIndex& bound_major(uint32_t e) const {
        return edges_[e].index(bound_major_[e]);
    }
    const std::vector<uint32_t>& edges_of(VarId x) const { return edges_of_[x]; }

    const FreeGrid& grid() const { return grid_; }

    /* Encodes an access request (values for V_b in bound order). Constants
     * absent from the database map to kNoValue, which matches nothing. */
    std::vector<Value> encode_request(const std::vector<Raw>& raw) const;
    std::vector<Value> encode_request(const std::vector<int64_t>& ints) const;

private:
    void assign_var_ids();
    void build_indexes_and_grid();

    AdornedView view_;
    ValueDict dict_;
    uint64_t dsize_ = 0;
    uint32_t mu_ = 0;
    std::vector<std::string> var_names_;
    std::vector<Relation> edges_;
    std::vector<uint32_t> free_major_;
    std::vector<uint32_t> bound_major_;
    std::vector<std::vector<uint32_t>> edges_of_;
    FreeGrid grid_;
};

}  // namespace cqz

#pragma once

#include "cqz/rep.hpp"

namespace cqz {

/* Variable-level shape of a view: named variables, which of them are bound,
 * and the variable set of every atom. Decompositions are validated and
 * searched against this, with no data attached. */
struct Hypergraph {
    std::vector<std::string> vars;             // declared head order
    std::vector<uint8_t> bound;                // 1 = supplied at query time
    std::vector<std::vector<uint32_t>> edges;  // sorted var indexes per atom

    static Hypergraph of_view(const AdornedView& view);

    uint32_t num_vars() const { return static_cast<uint32_t>(vars.size()); }
    uint32_t num_edges() const { return static_cast<uint32_t>(edges.size()); }
    /* Throws data_error for names outside the view. */
    uint32_t var_index(const std::string& name) const;
};

struct DecompBag {
    std::vector<uint32_t> vars;  // ascending var index
    int32_t parent = -1;
    std::vector<uint32_t> children;  // ascending bag ids
    /* Previous bag in pre-order; -1 on the root and its first child. The
     * answering loop resumes here when a bag exhausts after producing. */
    int32_t predecessor = -1;
    std::vector<uint32_t> bound_vars;  // shared with ancestors, ascending
    std::vector<uint32_t> free_vars;   // settled in this bag, ascending
    std::vector<uint32_t> edge_ids;    // atoms meeting the bag
    std::vector<std::vector<uint32_t>> edge_vars;  // their projections
};

/* Rooted tree of bags over a view's variables. Construction validates the
 * tree-decomposition laws (every atom inside some bag, connected occurrence
 * of every variable), merges all bags that lie inside the bound set into a
 * single root whose bag is exactly the bound variables, orients the tree
 * away from that root, and stores the bags in pre-order. */
class ConnexDecomposition {
public:
    /* `bag_vars` lists each input bag's variables; `parent[i]` is the input
     * parent position or -1 for the single input root. */
    ConnexDecomposition(Hypergraph hg,
                        const std::vector<std::vector<uint32_t>>& bag_vars,
                        const std::vector<int32_t>& parent);

    const Hypergraph& graph() const { return hg_; }
    uint32_t num_bags() const { return static_cast<uint32_t>(bags_.size()); }
    const DecompBag& bag(uint32_t t) const { return bags_[t]; }
    const std::string& var_name(uint32_t v) const { return hg_.vars[v]; }

    /* One line per bag in the stored order; parseable by load_decomposition
     * and stable under a reload. */
    std::string to_text() const;

private:
    Hypergraph hg_;
    std::vector<DecompBag> bags_;
};

/* Text format, one bag per line: `bag ID: {v1, v2} parent: ID`. The single
 * root line omits the parent clause; blank lines and '#' comments are
 * skipped. The bags are validated against the view's shape. */
ConnexDecomposition load_decomposition(const std::string& text,
                                       const AdornedView& view);

/* Cover of one bag's variables by its atom projections, discounted by the
 * bag's delay credit. */
struct BagCover {
    std::vector<double> u;  // aligned with the bag's edge_ids
    double alpha = 0;       // slack over the bag's free part; +inf if none
    double weight = 0;      // plain Σu
    double rho_plus = 0;    // Σu - δ·α, the bag's space exponent
};

struct WidthReport {
    double f = 0;       // max rho_plus over non-root bags
    double h = 0;       // heaviest root-to-leaf δ sum
    double u_star = 0;  // max cover weight over non-root bags
    std::vector<BagCover> bags;  // per bag; the root entry stays empty
};

/* Per-bag discounted covers under the delay assignment. `delta` is indexed
 * by bag, must be non-negative and zero on the root. `edge_sizes`, when
 * given, carries the original atom cardinalities into the cover instances. */
WidthReport delta_width(const ConnexDecomposition& d,
                        std::span<const double> delta,
                        std::span<const uint64_t> edge_sizes = {});

/* Exhaustive width minimization at δ≡0 over elimination orders of the free
 * variables; exact for the merged-root form it returns. Hypergraphs beyond
 * `limit` variables are refused (usage_error): supply a decomposition. */
ConnexDecomposition search_decomposition(const Hypergraph& hg,
                                         uint32_t limit = 8);

enum class BagBudget { space, delay };

/* Per-bag knob selection under one shared budget: the delay minimizer for a
 * space budget, the space minimizer for a delay budget. Delay exponents are
 * reported relative to the largest atom cardinality. */
struct BagParameters {
    std::vector<double> delta;           // per bag; 0 on the root
    std::vector<std::vector<double>> u;  // chosen cover per bag
    std::vector<double> alpha;
    std::vector<double> tau;
    double height = 0;  // heaviest root-to-leaf δ sum
};

BagParameters optimal_bag_parameters(const ConnexDecomposition& d,
                                     std::span<const uint64_t> edge_sizes,
                                     double budget, BagBudget kind);

/* The view induced on one non-root bag: projections of the original atoms,
 * bag-shared variables bound, bag-settled variables free, both groups in
 * ascending variable order. */
AdornedView bag_view(const ConnexDecomposition& d, uint32_t t);

/* Materializes the bag view from the prepared whole view's edges (the
 * projections inherit the rewriting applied there). */
PreparedView prepare_bag(const ConnexDecomposition& d, uint32_t t,
                         const PreparedView& whole);

class ConnexPlan;

/* Streaming cursor over one access request against a plan: pre-order walk
 * of the bags, one answer stream per bag, parent backtrack when a bag is
 * empty on first visit, predecessor rollover when it exhausts after
 * producing. Owns all its cursor state. */
class PlanStream {
public:
    std::optional<std::vector<Value>> next();

private:
    friend class ConnexPlan;

    struct BagCursor {
        std::optional<AnswerStream> stream;
        std::vector<Value> val;
        bool visited = false;
        bool fresh = true;
    };

    Binding bag_binding(uint32_t t) const;

    const ConnexPlan* plan_ = nullptr;
    Binding vb_;
    WorkMeter* m_ = nullptr;
    std::vector<BagCursor> cur_;  // aligned with bags; slot 0 unused
    uint32_t pos_ = 1;
    bool empty_pending_ = false;  // all-bound plans emit one empty tuple
    bool done_ = false;
};

/* A decomposition bound to data: one compressed representation per non-root
 * bag (semijoin-reduced against its children), membership probes for the
 * atoms that lie inside the bound set, and the computed width figures.
 * Immutable once built; concurrent streams are independent. */
class ConnexPlan {
public:
    /* Adoption constructor shared by the builder and the index loader;
     * `reps` holds one entry per non-root bag in bag order. */
    ConnexPlan(PreparedView whole, ConnexDecomposition decomp,
               std::vector<double> delta, std::vector<CompressedRep> reps,
               WidthReport width);

    const PreparedView& whole() const { return whole_; }
    const ConnexDecomposition& decomp() const { return decomp_; }
    const std::vector<double>& delta() const { return delta_; }
    const WidthReport& width() const { return width_; }
    const CompressedRep& bag_rep(uint32_t t) const { return reps_[t - 1]; }
    /* Emission column order: bag pre-order, ascending variables inside. */
    const std::vector<std::string>& free_order() const { return free_order_; }

    /* `vb` follows the whole view's bound order. The membership probes for
     * atoms inside the bound set run here, so a failed request costs one
     * probe per such atom and streams nothing. */
    PlanStream answer(Binding vb, WorkMeter* m) const;

private:
    friend class PlanStream;

    /* Where a bag's bound value comes from: the request (bag 0) or an
     * ancestor bag's current free valuation. */
    struct ValueSrc {
        uint32_t bag = 0;
        uint32_t pos = 0;
    };

    PreparedView whole_;
    ConnexDecomposition decomp_;
    std::vector<double> delta_;
    std::vector<CompressedRep> reps_;
    WidthReport width_;
    std::vector<uint32_t> root_edges_;  // atoms inside the bound set
    std::vector<std::vector<ValueSrc>> bound_src_;  // per bag
    std::vector<std::string> free_order_;
    std::vector<uint32_t> col_whole_;  // plan column -> whole free var id
};

/* Builds the per-bag representations with τ_t = ceil(|D|^{δ(t)}) and the
 * covers minimizing each bag's discounted weight, then walks the bags
 * bottom-up and clears every dictionary bit whose valuations all fail to
 * reach some child bag (first-answer probes through the child streams). */
ConnexPlan build_plan(const Database& db, const AdornedView& view,
                      const ConnexDecomposition& decomp,
                      std::span<const double> delta);

}  // namespace cqz

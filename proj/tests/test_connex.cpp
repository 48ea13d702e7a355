#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "cqz/connex.hpp"
#include "cqz/error.hpp"
#include "cqz/join.hpp"
#include "cqz/optimize.hpp"
#include "cqz/serialize.hpp"
#include "doctest.h"
#include "support/gen.hpp"

using namespace cqz;
using namespace cqz::testsup;

namespace {

/* Path of six edges with the ends and one middle vertex bound; the running
 * decomposition hangs {v2,v4} and {v3} below the bound triple and {v7} to
 * the side. All width figures for it are hand-computed. */
const char* kPathText =
    "P6^bfffbbf(v1, v2, v3, v4, v5, v6, v7) :- E1(v1, v2), E2(v2, v3), "
    "E3(v3, v4), E4(v4, v5), E5(v5, v6), E6(v6, v7).";
const char* kPathDecomp =
    "bag 0: {v1, v5, v6}\n"
    "bag 1: {v1, v2, v4, v5} parent: 0\n"
    "bag 2: {v2, v3, v4} parent: 1\n"
    "bag 3: {v6, v7} parent: 0\n";

/* Path of three edges, both ends bound, decomposed as a two-bag chain: the
 * shape where the bottom-up bit fixup is provably exact. */
const char* kP4Text =
    "P4^bffb(v1, v2, v3, v4) :- E1(v1, v2), E2(v2, v3), E3(v3, v4).";
const char* kP4Chain =
    "bag 0: {v1, v4}\n"
    "bag 1: {v1, v2, v4} parent: 0\n"
    "bag 2: {v2, v3, v4} parent: 1\n";

/* One bag with two leaf children hanging off its free variable. */
const char* kForkText =
    "T3^bfff(v1, v2, v3, v4) :- E1(v1, v2), E2(v2, v3), E3(v2, v4).";
const char* kForkDecomp =
    "bag 0: {v1}\n"
    "bag 1: {v1, v2} parent: 0\n"
    "bag 2: {v2, v3} parent: 1\n"
    "bag 3: {v2, v4} parent: 1\n";

Database edges_db(Rng& rng, const std::vector<std::string>& names,
                  uint32_t rows, int64_t dom) {
    std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
    for (const auto& n : names) t.emplace_back(n, random_rows(rng, 2, rows, dom));
    return Database::from_rows(t);
}

std::vector<std::vector<Value>> drain(PlanStream s) {
    std::vector<std::vector<Value>> out;
    while (auto t = s.next()) out.push_back(std::move(*t));
    return out;
}

std::vector<std::vector<Value>> drain(AnswerStream s) {
    std::vector<std::vector<Value>> out;
    while (auto t = s.next()) out.push_back(std::move(*t));
    return out;
}

std::vector<std::vector<int64_t>> all_tuples(int64_t dom, uint32_t k) {
    std::vector<std::vector<int64_t>> out{{}};
    for (uint32_t i = 0; i < k; ++i) {
        std::vector<std::vector<int64_t>> next;
        for (const auto& t : out)
            for (int64_t v = 0; v < dom; ++v) {
                auto u = t;
                u.push_back(v);
                next.push_back(std::move(u));
            }
        out = std::move(next);
    }
    return out;
}

/* Plan answers against the naive evaluator, over every request in the
 * domain box. The oracle runs on the view permuted to the plan's column
 * order so the tuples compare directly. */
void check_plan_matches(const Database& db, const std::string& view_text,
                        const ConnexDecomposition& d,
                        const std::vector<double>& delta, int64_t dom) {
    AdornedView view = parse_adorned_view(view_text);
    ConnexPlan plan = build_plan(db, view, d, delta);
    AdornedView oracle_view = parse_adorned_view(view_text);
    if (plan.whole().mu() > 0) reorder_free(oracle_view, plan.free_order());
    uint32_t nb = plan.whole().num_vars() - plan.whole().mu();
    for (const auto& req : all_tuples(dom, nb)) {
        Binding vb = plan.whole().encode_request(req);
        auto got = drain(plan.answer(vb, nullptr));
        auto want = brute_force_answer(db, oracle_view, vb);
        REQUIRE(got == want);
    }
}

bool in_interval(const FInterval& I, Value v) {
    if (I.forced_empty || I.is_empty()) return false;
    if (v < I.lo[0] || (v == I.lo[0] && I.lo_open)) return false;
    if (v > I.hi[0] || (v == I.hi[0] && I.hi_open)) return false;
    return true;
}

/* Test-side replica of the per-bag cover instance the optimizers run on. */
CoverInstance bag_inst(const ConnexDecomposition& d, uint32_t t,
                       std::span<const uint64_t> sizes) {
    const DecompBag& bag = d.bag(t);
    CoverInstance inst;
    inst.var_edges.resize(bag.vars.size());
    inst.free_var.assign(bag.vars.size(), 0);
    auto pos = [&](uint32_t v) {
        return static_cast<uint32_t>(
            std::lower_bound(bag.vars.begin(), bag.vars.end(), v) -
            bag.vars.begin());
    };
    for (uint32_t v : bag.free_vars) inst.free_var[pos(v)] = 1;
    uint64_t total = 0;
    for (size_t j = 0; j < bag.edge_ids.size(); ++j) {
        uint64_t s = sizes.empty() ? 1 : std::max<uint64_t>(sizes[bag.edge_ids[j]], 1);
        total += s;
        inst.log_size.push_back(std::log(static_cast<double>(s)));
        for (uint32_t v : bag.edge_vars[j])
            inst.var_edges[pos(v)].push_back(static_cast<uint32_t>(j));
    }
    inst.log_total = std::log(static_cast<double>(std::max<uint64_t>(total, 1)));
    return inst;
}

}  // namespace

TEST_CASE("view shapes expose variables, bound flags and reduced atoms") {
    AdornedView v = parse_adorned_view(
        "V^fb(x, y) :- R(x, x, 3), S(x, y), T(y).");
    Hypergraph hg = Hypergraph::of_view(v);
    REQUIRE(hg.num_vars() == 2);
    CHECK(hg.vars == std::vector<std::string>{"x", "y"});
    CHECK(hg.bound == std::vector<uint8_t>{0, 1});
    REQUIRE(hg.num_edges() == 3);
    CHECK(hg.edges[0] == std::vector<uint32_t>{0});  // repeats and 3 dropped
    CHECK(hg.edges[1] == (std::vector<uint32_t>{0, 1}));
    CHECK(hg.edges[2] == std::vector<uint32_t>{1});
    CHECK(hg.var_index("y") == 1);
    CHECK_THROWS_AS(hg.var_index("z"), data_error);
}

TEST_CASE("decomposition text loads, validates and round trips") {
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);
    REQUIRE(d.num_bags() == 4);
    CHECK(d.to_text() == kPathDecomp);
    ConnexDecomposition d2 = load_decomposition(d.to_text(), v);
    CHECK(d2.to_text() == kPathDecomp);

    CHECK(d.bag(0).vars == (std::vector<uint32_t>{0, 4, 5}));
    CHECK(d.bag(0).parent == -1);
    CHECK(d.bag(0).children == (std::vector<uint32_t>{1, 3}));
    CHECK(d.bag(0).bound_vars == (std::vector<uint32_t>{0, 4, 5}));
    CHECK(d.bag(0).free_vars.empty());

    CHECK(d.bag(1).vars == (std::vector<uint32_t>{0, 1, 3, 4}));
    CHECK(d.bag(1).parent == 0);
    CHECK(d.bag(1).children == std::vector<uint32_t>{2});
    CHECK(d.bag(1).bound_vars == (std::vector<uint32_t>{0, 4}));
    CHECK(d.bag(1).free_vars == (std::vector<uint32_t>{1, 3}));
    CHECK(d.bag(1).edge_ids == (std::vector<uint32_t>{0, 1, 2, 3, 4}));
    CHECK(d.bag(1).edge_vars[0] == (std::vector<uint32_t>{0, 1}));
    CHECK(d.bag(1).edge_vars[1] == std::vector<uint32_t>{1});
    CHECK(d.bag(1).edge_vars[2] == std::vector<uint32_t>{3});
    CHECK(d.bag(1).edge_vars[3] == (std::vector<uint32_t>{3, 4}));
    CHECK(d.bag(1).edge_vars[4] == std::vector<uint32_t>{4});

    CHECK(d.bag(2).bound_vars == (std::vector<uint32_t>{1, 3}));
    CHECK(d.bag(2).free_vars == std::vector<uint32_t>{2});
    CHECK(d.bag(2).predecessor == 1);
    CHECK(d.bag(3).bound_vars == std::vector<uint32_t>{5});
    CHECK(d.bag(3).free_vars == std::vector<uint32_t>{6});
    CHECK(d.bag(3).predecessor == 2);

    /* Comments and blank lines are skipped. */
    std::string commented = std::string("# layout\n\n") + kPathDecomp;
    CHECK(load_decomposition(commented, v).to_text() == kPathDecomp);
}

TEST_CASE("bags inside the bound set collapse into one root") {
    AdornedView v = parse_adorned_view(kPathText);
    const char* split_root =
        "bag 0: {v1, v5}\n"
        "bag 1: {v5, v6} parent: 0\n"
        "bag 2: {v1, v2, v4, v5} parent: 0\n"
        "bag 3: {v2, v3, v4} parent: 2\n"
        "bag 4: {v6, v7} parent: 1\n";
    ConnexDecomposition d = load_decomposition(split_root, v);
    CHECK(d.to_text() == kPathDecomp);
}

TEST_CASE("an empty bound set gets a synthesized empty root") {
    AdornedView v = parse_adorned_view(
        "Tr^fff(x, y, z) :- A(x, y), B(y, z), C(x, z).");
    ConnexDecomposition d = load_decomposition("bag 0: {x, y, z}\n", v);
    REQUIRE(d.num_bags() == 2);
    CHECK(d.bag(0).vars.empty());
    CHECK(d.to_text() == "bag 0: {}\nbag 1: {x, y, z} parent: 0\n");
    CHECK(load_decomposition(d.to_text(), v).to_text() == d.to_text());
}

TEST_CASE("invalid decompositions are rejected") {
    AdornedView path = parse_adorned_view(kPathText);
    AdornedView p3 = parse_adorned_view("P3^fff(a, b, c) :- E1(a, b), E2(b, c).");

    /* Atom outside every bag. */
    CHECK_THROWS_AS(
        load_decomposition("bag 0: {}\nbag 1: {a, b} parent: 0\nbag 2: {c} parent: 1\n", p3),
        data_error);
    /* Occurrences of b are split across two subtrees. */
    CHECK_THROWS_AS(
        load_decomposition("bag 0: {}\nbag 1: {a, b} parent: 0\nbag 2: {b, c} parent: 0\n", p3),
        data_error);
    /* The bags inside the bound set miss v6. */
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1, v5}\n"
                                       "bag 1: {v1, v2, v4, v5} parent: 0\n"
                                       "bag 2: {v2, v3, v4} parent: 1\n"
                                       "bag 3: {v5, v6, v7} parent: 0\n",
                                       path),
                    data_error);
    /* Bound-set bags present but split apart in the tree. */
    AdornedView rs = parse_adorned_view("RS^bfb(x, y, z) :- R(x, y), S(y, z).");
    CHECK_THROWS_AS(
        load_decomposition(
            "bag 0: {x}\nbag 1: {x, y, z} parent: 0\nbag 2: {z} parent: 1\n", rs),
        data_error);

    CHECK_THROWS_AS(load_decomposition("", path), data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1, v9}\n", path), data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1} parent: 5\n", path), data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1}\nbag 1: {v2}\n", path),
                    data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1}\nbag 3: {v2} parent: 0\n", path),
                    data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0: {v1}\nbag 0: {v2} parent: 0\n", path),
                    data_error);
    CHECK_THROWS_AS(load_decomposition("bag 0 {v1}\n", path), data_error);
    /* Parent cycle below the root never reaches it. */
    AdornedView tr = parse_adorned_view(
        "Tr^fff(x, y, z) :- A(x, y), B(y, z), C(x, z).");
    CHECK_THROWS_AS(
        load_decomposition(
            "bag 0: {x, y, z}\nbag 1: {x, y} parent: 2\nbag 2: {x, y} parent: 1\n", tr),
        data_error);
}

TEST_CASE("delay assignment widths on the bound path decomposition") {
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);

    /* Hand-computed: weights 1 on {v1,v2} and {v4,v5} cover the first bag
     * with unit slack over {v2,v4}, so 2 - 1/3 = 5/3; the middle bag covers
     * with {v2,v3} and {v3,v4} at slack 2 over {v3}, so 2 - 2/6 = 5/3; the
     * side bag costs 1 outright. */
    std::vector<double> delta{0, 1.0 / 3, 1.0 / 6, 0};
    WidthReport w = delta_width(d, delta);
    CHECK(w.f == doctest::Approx(5.0 / 3));
    CHECK(w.h == doctest::Approx(0.5));
    CHECK(w.u_star == doctest::Approx(2.0));

    REQUIRE(w.bags.size() == 4);
    std::vector<double> u1{1, 0, 0, 1, 0};
    REQUIRE(w.bags[1].u.size() == 5);
    for (size_t i = 0; i < u1.size(); ++i)
        CHECK(w.bags[1].u[i] == doctest::Approx(u1[i]));
    CHECK(w.bags[1].alpha == doctest::Approx(1.0));
    CHECK(w.bags[1].rho_plus == doctest::Approx(5.0 / 3));
    CHECK(w.bags[1].weight == doctest::Approx(2.0));

    std::vector<double> u2{0, 1, 1, 0};
    REQUIRE(w.bags[2].u.size() == 4);
    for (size_t i = 0; i < u2.size(); ++i)
        CHECK(w.bags[2].u[i] == doctest::Approx(u2[i]));
    CHECK(w.bags[2].alpha == doctest::Approx(2.0));
    CHECK(w.bags[2].rho_plus == doctest::Approx(5.0 / 3));

    CHECK(w.bags[3].rho_plus == doctest::Approx(1.0));
    CHECK(w.bags[3].weight == doctest::Approx(1.0));

    /* Zero credit everywhere reduces each bag to its plain cover number. */
    WidthReport z = delta_width(d, std::vector<double>{0, 0, 0, 0});
    CHECK(z.f == doctest::Approx(2.0));
    CHECK(z.h == doctest::Approx(0.0));

    CHECK_THROWS_AS(delta_width(d, std::vector<double>{0, 0, 0}), data_error);
    CHECK_THROWS_AS(delta_width(d, std::vector<double>{0, -0.1, 0, 0}),
                    data_error);
    CHECK_THROWS_AS(delta_width(d, std::vector<double>{0.5, 0, 0, 0}),
                    data_error);
    std::vector<uint64_t> bad_sizes{10, 10};
    CHECK_THROWS_AS(
        delta_width(d, std::vector<double>{0, 0, 0, 0}, bad_sizes),
        data_error);
}

TEST_CASE("decomposition search lands on known widths") {
    auto width_of = [](const ConnexDecomposition& d) {
        return delta_width(d, std::vector<double>(d.num_bags(), 0.0)).f;
    };

    /* Two-atom path with the middle variable projected away: every legal
     * layout needs the full bag, and each end is covered by one atom only. */
    AdornedView rs_b = parse_adorned_view("RS^bfb(x, y, z) :- R(x, y), S(y, z).");
    ConnexDecomposition d1 = search_decomposition(Hypergraph::of_view(rs_b));
    REQUIRE(d1.num_bags() == 2);
    CHECK(d1.bag(1).vars == (std::vector<uint32_t>{0, 1, 2}));
    CHECK(width_of(d1) == doctest::Approx(2.0));

    /* Fully free, the same path splits into unit-width bags. */
    AdornedView rs_f = parse_adorned_view("RS^fff(x, y, z) :- R(x, y), S(y, z).");
    ConnexDecomposition d2 = search_decomposition(Hypergraph::of_view(rs_f));
    CHECK(width_of(d2) == doctest::Approx(1.0));

    /* Six atoms over five variables: binding the 4-cycle leaves the
     * triangle-shaped residue {v1,v2,v5} coverable at 3/2, while the free
     * variant meets the cycle and needs 2. */
    const char* he =
        "(v1, v2, v3, v4, v5) :- W(v1, v2), V(v3, v4), U(v1, v3), "
        "T(v2, v4), R(v2, v5), S(v1, v5).";
    AdornedView he_b = parse_adorned_view(std::string("HE^bbbbf") + he);
    ConnexDecomposition d3 = search_decomposition(Hypergraph::of_view(he_b));
    REQUIRE(d3.num_bags() == 2);
    CHECK(d3.bag(1).vars == (std::vector<uint32_t>{0, 1, 4}));
    CHECK(width_of(d3) == doctest::Approx(1.5));
    AdornedView he_f = parse_adorned_view(std::string("HE^fffff") + he);
    CHECK(width_of(search_decomposition(Hypergraph::of_view(he_f))) ==
          doctest::Approx(2.0));

    AdornedView tr = parse_adorned_view(
        "Tr^fff(x, y, z) :- A(x, y), B(y, z), C(x, z).");
    ConnexDecomposition d4 = search_decomposition(Hypergraph::of_view(tr));
    CHECK(width_of(d4) == doctest::Approx(1.5));
    CHECK(search_decomposition(Hypergraph::of_view(tr)).to_text() ==
          d4.to_text());
    CHECK_THROWS_AS(search_decomposition(Hypergraph::of_view(tr), 2),
                    usage_error);

    AdornedView all_b = parse_adorned_view(
        "Tr^bbb(x, y, z) :- A(x, y), B(y, z), C(x, z).");
    ConnexDecomposition d5 = search_decomposition(Hypergraph::of_view(all_b));
    REQUIRE(d5.num_bags() == 1);
    CHECK(d5.bag(0).vars == (std::vector<uint32_t>{0, 1, 2}));
}

TEST_CASE("bag views project the original atoms") {
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);
    AdornedView b1 = bag_view(d, 1);
    CHECK(b1.name == "bag1");
    CHECK(b1.adorn == "ffbb");
    CHECK(b1.head == (std::vector<std::string>{"v2", "v4", "v1", "v5"}));
    REQUIRE(b1.atoms.size() == 5);
    CHECK(b1.atoms[0].rel == "p0");
    CHECK(b1.atoms[0].vars == (std::vector<std::string>{"v1", "v2"}));
    CHECK(b1.atoms[1].rel == "p1");
    CHECK(b1.atoms[1].vars == std::vector<std::string>{"v2"});
    CHECK(b1.atoms[3].vars == (std::vector<std::string>{"v4", "v5"}));
    CHECK(b1.is_full());

    AdornedView b3 = bag_view(d, 3);
    CHECK(b3.adorn == "fb");
    CHECK(b3.head == (std::vector<std::string>{"v7", "v6"}));
}

TEST_CASE("prepared bags answer like their projected base tables") {
    Rng rng(90210);
    for (int iter = 0; iter < 6; ++iter) {
        Database db =
            edges_db(rng, {"E1", "E2", "E3", "E4", "E5", "E6"}, 40, 5);
        AdornedView v = parse_adorned_view(kPathText);
        ConnexDecomposition d = load_decomposition(kPathDecomp, v);
        PreparedView whole(v, db);
        PreparedView bag = prepare_bag(d, 1, whole);
        REQUIRE(bag.num_edges() == 5);

        /* Rebuild the projections as a standalone database and compare
         * against the naive evaluator on decoded constants. */
        std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
        for (uint32_t e = 0; e < 5; ++e) {
            const Relation& rel = whole.edge(d.bag(1).edge_ids[e]);
            std::vector<std::vector<int64_t>> rows;
            for (uint32_t r = 0; r < rel.size(); ++r) {
                std::vector<int64_t> row;
                for (uint32_t c = 0; c < rel.arity(); ++c) {
                    VarId x = rel.schema()[c];
                    bool kept = false;
                    for (uint32_t bv : d.bag(1).edge_vars[e])
                        if (whole.var_id(d.var_name(bv)) == x) kept = true;
                    if (kept) row.push_back(whole.dict().decode(rel.row(r)[c]).num);
                }
                rows.push_back(std::move(row));
            }
            t.emplace_back("p" + std::to_string(d.bag(1).edge_ids[e]),
                           std::move(rows));
        }
        Database bag_db = Database::from_rows(t);
        AdornedView bv = bag_view(d, 1);
        CompressedRep rep(prepare_bag(d, 1, whole), ones_cover(5), 2.0);
        for (const auto& req : all_tuples(5, 2)) {
            std::vector<Raw> raw{Raw::of_int(req[0]), Raw::of_int(req[1])};
            auto want = brute_force_answer(bag_db, bv, raw);
            auto got = drain(rep.answer(bag.encode_request(req), nullptr));
            std::vector<std::vector<int64_t>> wi, gi;
            for (auto& r : want)
                wi.push_back({bag_db.dict().decode(r[0]).num,
                              bag_db.dict().decode(r[1]).num});
            for (auto& r : got)
                gi.push_back({whole.dict().decode(r[0]).num,
                              whole.dict().decode(r[1]).num});
            REQUIRE(gi == wi);
        }
    }
}

TEST_CASE("plans answer exactly like the naive evaluator") {
    Rng rng(424242);

    for (int iter = 0; iter < 4; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3", "E4", "E5", "E6"}, 40, 5);
        AdornedView v = parse_adorned_view(kPathText);
        ConnexDecomposition d = load_decomposition(kPathDecomp, v);
        check_plan_matches(db, kPathText, d, {0, 1.0 / 3, 1.0 / 6, 0}, 5);
        check_plan_matches(db, kPathText, d, {0, 0, 0, 0}, 5);
        check_plan_matches(db, kPathText, d, {0, 0.4, 0.2, 0.3}, 5);
    }

    for (int iter = 0; iter < 6; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3"}, 60, 6);
        AdornedView v = parse_adorned_view(kP4Text);
        ConnexDecomposition chain = load_decomposition(kP4Chain, v);
        check_plan_matches(db, kP4Text, chain, {0, 0, 0}, 6);
        check_plan_matches(db, kP4Text, chain, {0, 0.5, 0}, 6);
        check_plan_matches(db, kP4Text, chain, {0, 0.5, 0.25}, 6);
        ConnexDecomposition searched =
            search_decomposition(Hypergraph::of_view(v));
        check_plan_matches(db, kP4Text, searched, {}, 6);
    }

    for (int iter = 0; iter < 6; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3"}, 50, 6);
        AdornedView v = parse_adorned_view(kForkText);
        ConnexDecomposition d = load_decomposition(kForkDecomp, v);
        check_plan_matches(db, kForkText, d, {0, 0, 0, 0}, 6);
        check_plan_matches(db, kForkText, d, {0, 0.5, 0, 0}, 6);
    }

    const char* star =
        "St^bfff(c, x, y, z) :- L1(c, x), L2(c, y), L3(c, z).";
    for (int iter = 0; iter < 6; ++iter) {
        Database db = edges_db(rng, {"L1", "L2", "L3"}, 50, 6);
        AdornedView v = parse_adorned_view(star);
        ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
        check_plan_matches(db, star, d, {}, 6);
        std::vector<double> dl(d.num_bags(), 0.3);
        dl[0] = 0;
        check_plan_matches(db, star, d, dl, 6);
    }

    /* Full enumeration down a deep all-free chain. */
    const char* p5 =
        "P5^fffff(a, b, c, e, f) :- E1(a, b), E2(b, c), E3(c, e), E4(e, f).";
    for (int iter = 0; iter < 4; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3", "E4"}, 30, 5);
        AdornedView v = parse_adorned_view(p5);
        ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
        REQUIRE(d.num_bags() == 6);
        check_plan_matches(db, p5, d, {}, 5);
    }

    const char* tri = "Tr^fff(x, y, z) :- A(x, y), B(y, z), C(x, z).";
    const char* tri_b = "Tr^bff(x, y, z) :- A(x, y), B(y, z), C(x, z).";
    const char* tri_bb = "Tr^bbf(x, y, z) :- A(x, y), B(y, z), C(x, z).";
    const char* tri_all = "Tr^bbb(x, y, z) :- A(x, y), B(y, z), C(x, z).";
    for (int iter = 0; iter < 5; ++iter) {
        Database db = edges_db(rng, {"A", "B", "C"}, 60, 6);
        for (const char* text : {tri, tri_b, tri_bb, tri_all}) {
            AdornedView v = parse_adorned_view(text);
            ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
            check_plan_matches(db, text, d, {}, 6);
        }
        AdornedView v = parse_adorned_view(tri_b);
        ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
        std::vector<double> dl(d.num_bags(), 0.4);
        dl[0] = 0;
        check_plan_matches(db, tri_b, d, dl, 6);
    }

    /* A bag whose variables are all settled above it degenerates to a
     * membership filter inside the walk. */
    {
        Database db = edges_db(rng, {"E1", "E2", "E3"}, 60, 6);
        const char* redundant =
            "bag 0: {v1, v4}\n"
            "bag 1: {v1, v2, v4} parent: 0\n"
            "bag 2: {v2, v3, v4} parent: 1\n"
            "bag 3: {v2, v4} parent: 2\n";
        AdornedView v = parse_adorned_view(kP4Text);
        ConnexDecomposition d = load_decomposition(redundant, v);
        CHECK(d.bag(3).free_vars.empty());
        check_plan_matches(db, kP4Text, d, {0, 0, 0, 0}, 6);
    }

    /* Constant-only atoms turn into nullary gates on the root. */
    {
        std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
        t.emplace_back("K", random_rows(rng, 2, 30, 5));
        t.emplace_back("M", std::vector<std::vector<int64_t>>{{3}});
        Database db = Database::from_rows(t);
        const char* gated = "G^bb(a, b) :- K(a, b), M(3).";
        AdornedView v = parse_adorned_view(gated);
        ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
        check_plan_matches(db, gated, d, {}, 5);
        t[1].second = {{4}};  // the gate value disappears
        Database db2 = Database::from_rows(t);
        AdornedView v2 = parse_adorned_view(gated);
        ConnexPlan plan = build_plan(db2, v2, d, {});
        for (const auto& req : all_tuples(5, 2))
            CHECK(drain(plan.answer(plan.whole().encode_request(req), nullptr))
                      .empty());
    }
}

TEST_CASE("plan requests are validated") {
    Rng rng(5150);
    Database db = edges_db(rng, {"E1", "E2", "E3"}, 20, 4);
    AdornedView v = parse_adorned_view(kP4Text);
    ConnexDecomposition d = load_decomposition(kP4Chain, v);
    ConnexPlan plan = build_plan(db, v, d, {});
    CHECK_THROWS_AS(plan.answer({1}, nullptr), data_error);

    AdornedView other = parse_adorned_view(kForkText);
    ConnexDecomposition df = load_decomposition(kForkDecomp, other);
    CHECK_THROWS_AS(build_plan(db, v, df, {}), data_error);
}

TEST_CASE("fixup clears exactly the bits without a full witness") {
    Rng rng(7331);
    for (int iter = 0; iter < 12; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3"}, 50, 6);
        AdornedView v = parse_adorned_view(kP4Text);
        ConnexDecomposition d = load_decomposition(kP4Chain, v);

        std::set<std::pair<Value, Value>> e1, e2, e3;
        std::set<Value> e2c0, e3c1;
        for (uint32_t r = 0; r < db.table("E1").nrows; ++r)
            e1.emplace(db.table("E1").row(r)[0], db.table("E1").row(r)[1]);
        for (uint32_t r = 0; r < db.table("E2").nrows; ++r) {
            e2.emplace(db.table("E2").row(r)[0], db.table("E2").row(r)[1]);
            e2c0.insert(db.table("E2").row(r)[0]);
        }
        for (uint32_t r = 0; r < db.table("E3").nrows; ++r) {
            e3.emplace(db.table("E3").row(r)[0], db.table("E3").row(r)[1]);
            e3c1.insert(db.table("E3").row(r)[1]);
        }
        auto chain_on = [&](Value v2, Value v4) {
            for (const auto& [a, b] : e2)
                if (a == v2 && e3.count({b, v4})) return true;
            return false;
        };

        for (double d1 : {0.0, 0.35, 0.7}) {
            AdornedView view = parse_adorned_view(kP4Text);
            ConnexPlan plan =
                build_plan(db, view, d, std::vector<double>{0, d1, 0});
            const CompressedRep& rep = plan.bag_rep(1);

            /* The untouched twin: same projections, cover and budget. */
            AdornedView ordered = parse_adorned_view(kP4Text);
            reorder_free(ordered, plan.free_order());
            PreparedView whole(ordered, db);
            CompressedRep twin(prepare_bag(d, 1, whole),
                               Cover{plan.width().bags[1].u}, rep.tau());
            REQUIRE(twin.dict().size() == rep.dict().size());

            for (size_t i = 0; i < rep.dict().size(); ++i) {
                const auto& et = twin.dict().entries()[i];
                const auto& ef = rep.dict().entries()[i];
                REQUIRE(et.node == ef.node);
                auto vt = twin.dict().vb_of(et);
                auto vf = rep.dict().vb_of(ef);
                REQUIRE(std::vector<Value>(vt.begin(), vt.end()) ==
                        std::vector<Value>(vf.begin(), vf.end()));
                Value a1 = vf[0], a4 = vf[1];
                const FInterval& I = rep.tree().nodes[ef.node].ival;

                bool join_here = false, full_witness = false;
                if (e3c1.count(a4)) {
                    for (const auto& [x, y] : e1) {
                        if (x != a1 || !in_interval(I, y)) continue;
                        if (e2c0.count(y)) join_here = true;
                        if (chain_on(y, a4)) full_witness = true;
                    }
                }
                CHECK(et.bit == (join_here ? 1 : 0));
                CHECK(ef.bit == (full_witness ? 1 : 0));
                CHECK(ef.bit <= et.bit);
            }
        }
    }
}

TEST_CASE("fixup clears forks against both children at one witness") {
    Rng rng(24601);
    for (int iter = 0; iter < 10; ++iter) {
        Database db = edges_db(rng, {"E1", "E2", "E3"}, 40, 6);
        AdornedView v = parse_adorned_view(kForkText);
        ConnexDecomposition d = load_decomposition(kForkDecomp, v);
        AdornedView view = parse_adorned_view(kForkText);
        ConnexPlan plan =
            build_plan(db, view, d, std::vector<double>{0, 0.5, 0, 0});
        const CompressedRep& rep = plan.bag_rep(1);

        std::set<std::pair<Value, Value>> e1;
        std::set<Value> e2c0, e3c0;
        for (uint32_t r = 0; r < db.table("E1").nrows; ++r)
            e1.emplace(db.table("E1").row(r)[0], db.table("E1").row(r)[1]);
        for (uint32_t r = 0; r < db.table("E2").nrows; ++r)
            e2c0.insert(db.table("E2").row(r)[0]);
        for (uint32_t r = 0; r < db.table("E3").nrows; ++r)
            e3c0.insert(db.table("E3").row(r)[0]);

        for (size_t i = 0; i < rep.dict().size(); ++i) {
            const auto& ef = rep.dict().entries()[i];
            Value a1 = rep.dict().vb_of(ef)[0];
            const FInterval& I = rep.tree().nodes[ef.node].ival;
            bool witness = false;
            for (const auto& [x, y] : e1)
                if (x == a1 && in_interval(I, y) && e2c0.count(y) &&
                    e3c0.count(y))
                    witness = true;
            CHECK(ef.bit == (witness ? 1 : 0));
        }
    }
}

TEST_CASE("a dead child clears its parent and the plan streams nothing") {
    Rng rng(1999);
    std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
    t.emplace_back("E1", random_rows(rng, 2, 50, 6));
    t.emplace_back("E2", random_rows(rng, 2, 50, 6));
    /* E3 rows never meet E2's value range, so the lower bag is dead. */
    std::vector<std::vector<int64_t>> far;
    for (int64_t i = 0; i < 6; ++i) far.push_back({99, i});
    t.emplace_back("E3", far);
    Database db = Database::from_rows(t);

    AdornedView v = parse_adorned_view(kP4Text);
    ConnexDecomposition d = load_decomposition(kP4Chain, v);
    ConnexPlan plan = build_plan(db, v, d, std::vector<double>{0, 0.5, 0});
    for (const auto& e : plan.bag_rep(1).dict().entries()) CHECK(e.bit == 0);
    for (const auto& req : all_tuples(6, 2))
        CHECK(drain(plan.answer(plan.whole().encode_request(req), nullptr))
                  .empty());
}

TEST_CASE("root gate atoms fail requests in constant probes") {
    Rng rng(8080);
    std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
    t.emplace_back("K", random_rows(rng, 2, 12, 5));
    t.emplace_back("E", random_rows(rng, 2, 40, 5));
    t.emplace_back("F", random_rows(rng, 2, 40, 5));
    Database db = Database::from_rows(t);
    const char* text = "M2^bbf(a, b, y) :- K(a, b), E(a, y), F(b, y).";
    AdornedView v = parse_adorned_view(text);
    ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
    REQUIRE(d.num_bags() == 2);
    ConnexPlan plan = build_plan(db, v, d, {});

    std::set<std::pair<Value, Value>> k;
    for (uint32_t r = 0; r < db.table("K").nrows; ++r)
        k.emplace(db.table("K").row(r)[0], db.table("K").row(r)[1]);

    AdornedView ov = parse_adorned_view(text);
    reorder_free(ov, plan.free_order());
    for (const auto& req : all_tuples(5, 2)) {
        Binding vb = plan.whole().encode_request(req);
        WorkMeter m;
        auto got = drain(plan.answer(vb, &m));
        if (!k.count({vb[0], vb[1]})) {
            CHECK(got.empty());
            CHECK(m.units() <= 2);
        } else {
            CHECK(got == brute_force_answer(db, ov, vb));
        }
    }
}

TEST_CASE("chosen bag knobs reproduce the hand-computed assignment") {
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);
    std::vector<uint64_t> sizes(6, 4096);

    /* Shared budget 4096^(5/3): the chain splits its credit 1/3 + 1/6 and
     * the side bag fits with none. */
    BagParameters bp = optimal_bag_parameters(
        d, sizes, std::pow(4096.0, 5.0 / 3.0), BagBudget::space);
    REQUIRE(bp.delta.size() == 4);
    CHECK(bp.delta[0] == 0.0);
    CHECK(bp.delta[1] == doctest::Approx(1.0 / 3).epsilon(1e-4));
    CHECK(bp.delta[2] == doctest::Approx(1.0 / 6).epsilon(1e-4));
    CHECK(bp.delta[3] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(bp.height == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(bp.tau[1] == doctest::Approx(16.0).epsilon(1e-3));
    CHECK(bp.tau[2] == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(bp.tau[3] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(bp.alpha[1] == doctest::Approx(1.0));
    CHECK(bp.alpha[2] == doctest::Approx(2.0));
    std::vector<double> u1{1, 0, 0, 1, 0}, u2{0, 1, 1, 0};
    for (size_t i = 0; i < u1.size(); ++i)
        CHECK(bp.u[1][i] == doctest::Approx(u1[i]).epsilon(1e-5));
    for (size_t i = 0; i < u2.size(); ++i)
        CHECK(bp.u[2][i] == doctest::Approx(u2[i]).epsilon(1e-5));

    /* A huge budget drives every delay to 1 and each cover to its bag's
     * plain cover number. */
    BagParameters loose =
        optimal_bag_parameters(d, sizes, 1e12, BagBudget::space);
    std::vector<double> rho{0, 2, 2, 1};
    for (uint32_t t = 1; t < 4; ++t) {
        CHECK(loose.delta[t] == doctest::Approx(0.0).epsilon(1e-6));
        double sum = 0;
        for (double u : loose.u[t]) sum += u;
        CHECK(sum == doctest::Approx(rho[t]).epsilon(1e-5));
    }

    /* A unit delay budget forces tau 1 everywhere. */
    BagParameters tight = optimal_bag_parameters(d, sizes, 1.0, BagBudget::delay);
    for (uint32_t t = 1; t < 4; ++t)
        CHECK(tight.tau[t] <= 1.0 + 1e-6);
    CHECK(tight.height == doctest::Approx(0.0).epsilon(1e-6));

    std::vector<uint64_t> bad(5, 10);
    CHECK_THROWS_AS(
        optimal_bag_parameters(d, bad, 100.0, BagBudget::space), data_error);
}

TEST_CASE("bag knobs match standalone optimizer calls") {
    Rng rng(31337);
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);
    for (int iter = 0; iter < 8; ++iter) {
        std::vector<uint64_t> sizes;
        uint64_t largest = 1;
        for (int e = 0; e < 6; ++e) {
            sizes.push_back(1 + rng() % 1000);
            largest = std::max(largest, sizes.back());
        }
        double budget =
            static_cast<double>(largest) * (2.0 + static_cast<double>(rng() % 50));
        BagParameters bp =
            optimal_bag_parameters(d, sizes, budget, BagBudget::space);
        for (uint32_t t = 1; t < d.num_bags(); ++t) {
            DelayChoice c = min_delay_cover(bag_inst(d, t, sizes), budget);
            CHECK(bp.tau[t] == doctest::Approx(c.tau));
            CHECK(bp.alpha[t] == doctest::Approx(c.alpha));
            REQUIRE(bp.u[t].size() == c.u.size());
            for (size_t i = 0; i < c.u.size(); ++i)
                CHECK(bp.u[t][i] == doctest::Approx(c.u[i]));
            double want = std::log(std::max(c.tau, 1.0)) /
                          std::log(static_cast<double>(largest));
            CHECK(bp.delta[t] == doctest::Approx(want).epsilon(1e-6));
        }

        double delay = 1.0 + static_cast<double>(rng() % 20);
        BagParameters bd =
            optimal_bag_parameters(d, sizes, delay, BagBudget::delay);
        for (uint32_t t = 1; t < d.num_bags(); ++t) {
            SpaceChoice c = min_space_cover(bag_inst(d, t, sizes), delay);
            CHECK(bd.tau[t] == doctest::Approx(c.tau));
            for (size_t i = 0; i < c.u.size(); ++i)
                CHECK(bd.u[t][i] == doctest::Approx(c.u[i]));
        }
    }
}

TEST_CASE("plan delay stays within the height budget") {
    Rng rng(60606);
    auto check_delay = [](const ConnexPlan& plan, const Database& db,
                          int64_t dom) {
        double dsz = static_cast<double>(db.total_tuples());
        double lg = std::log2(dsz + 2);
        double budget = 64.0 * std::pow(dsz, plan.width().h) * lg * lg * lg;
        uint32_t nb = plan.whole().num_vars() - plan.whole().mu();
        for (const auto& req : all_tuples(dom, nb)) {
            WorkMeter m;
            DelayProbe probe(m);
            PlanStream s = plan.answer(plan.whole().encode_request(req), &m);
            while (auto t = s.next()) probe.on_output();
            probe.on_end();
            CHECK(probe.max_gap() <= static_cast<uint64_t>(budget));
        }
    };

    {
        Database db = edges_db(rng, {"E1", "E2", "E3", "E4", "E5", "E6"}, 80, 6);
        AdornedView v = parse_adorned_view(kPathText);
        ConnexDecomposition d = load_decomposition(kPathDecomp, v);
        ConnexPlan plan = build_plan(
            db, v, d, std::vector<double>{0, 1.0 / 3, 1.0 / 6, 0});
        check_delay(plan, db, 6);
    }
    {
        /* Zero credit everywhere: the gaps stay polylogarithmic, far below
         * the data size. */
        Database db = edges_db(rng, {"A", "B", "C"}, 400, 25);
        const char* tri = "Tr^fff(x, y, z) :- A(x, y), B(y, z), C(x, z).";
        AdornedView v = parse_adorned_view(tri);
        ConnexDecomposition d = search_decomposition(Hypergraph::of_view(v));
        ConnexPlan plan = build_plan(db, v, d, {});
        WorkMeter m;
        DelayProbe probe(m);
        PlanStream s = plan.answer({}, &m);
        size_t outs = 0;
        while (auto t = s.next()) {
            probe.on_output();
            ++outs;
        }
        probe.on_end();
        REQUIRE(outs > 0);
        double lg = std::log2(static_cast<double>(db.total_tuples()) + 2);
        CHECK(probe.max_gap() <= static_cast<uint64_t>(64.0 * lg * lg * lg));
        CHECK(probe.max_gap() < db.total_tuples());
    }
}

TEST_CASE("plan files round trip bit for bit") {
    Rng rng(11711);
    Database db = edges_db(rng, {"E1", "E2", "E3", "E4", "E5", "E6"}, 50, 6);
    AdornedView v = parse_adorned_view(kPathText);
    ConnexDecomposition d = load_decomposition(kPathDecomp, v);
    ConnexPlan plan =
        build_plan(db, v, d, std::vector<double>{0, 1.0 / 3, 1.0 / 6, 0});

    std::vector<uint8_t> bytes = serialize(plan);
    ConnexPlan plan2 = deserialize_plan(bytes, db);
    CHECK(serialize(plan2) == bytes);
    CHECK(plan2.delta() == plan.delta());
    CHECK(plan2.free_order() == plan.free_order());
    CHECK(plan2.width().f == doctest::Approx(plan.width().f));
    CHECK(plan2.decomp().to_text() == plan.decomp().to_text());
    for (int i = 0; i < 24; ++i) {
        std::vector<int64_t> req{static_cast<int64_t>(rng() % 6),
                                 static_cast<int64_t>(rng() % 6),
                                 static_cast<int64_t>(rng() % 6)};
        Binding vb = plan.whole().encode_request(req);
        CHECK(drain(plan.answer(vb, nullptr)) ==
              drain(plan2.answer(vb, nullptr)));
    }

    /* The two file kinds reject each other with a pointed message. */
    CHECK_THROWS_WITH_AS(deserialize(bytes, db),
                         "this file holds a query plan, not a single view index",
                         data_error);
    AdornedView tv = parse_adorned_view(
        "Tr^bff(x, y, z) :- A(x, y), B(y, z), C(x, z).");
    Database tdb = edges_db(rng, {"A", "B", "C"}, 30, 5);
    CompressedRep rep(PreparedView(tv, tdb), ones_cover(3), 2.0);
    CHECK_THROWS_WITH_AS(deserialize_plan(serialize(rep), tdb),
                         "this file holds a single view index, not a query plan",
                         data_error);

    /* Truncations and version damage fail cleanly. */
    for (size_t cut : {size_t{0}, size_t{3}, size_t{5}, size_t{9}, size_t{40},
                       bytes.size() / 3, bytes.size() / 2, bytes.size() - 7,
                       bytes.size() - 1}) {
        std::vector<uint8_t> prefix(bytes.begin(), bytes.begin() + cut);
        CHECK_THROWS_AS(deserialize_plan(prefix, db), data_error);
    }
    {
        std::vector<uint8_t> wrong = bytes;
        wrong[4] = 9;
        CHECK_THROWS_AS(deserialize_plan(wrong, db), data_error);
        wrong = bytes;
        wrong[0] = 'X';
        CHECK_THROWS_AS(deserialize_plan(wrong, db), data_error);
        std::vector<uint8_t> extra = bytes;
        extra.push_back(0);
        CHECK_THROWS_AS(deserialize_plan(extra, db), data_error);
    }

    /* A database over a different value universe refuses the file. */
    Database other = edges_db(rng, {"E1", "E2", "E3", "E4", "E5", "E6"}, 80, 9);
    CHECK_THROWS_AS(deserialize_plan(bytes, other), data_error);

    /* An all-bound plan has no bag payload at all and still round trips. */
    std::vector<std::pair<std::string, std::vector<std::vector<int64_t>>>> t;
    t.emplace_back("K", random_rows(rng, 2, 20, 5));
    Database kdb = Database::from_rows(t);
    const char* kb = "KB^bb(a, b) :- K(a, b).";
    AdornedView kv = parse_adorned_view(kb);
    ConnexDecomposition kd = search_decomposition(Hypergraph::of_view(kv));
    ConnexPlan kplan = build_plan(kdb, kv, kd, {});
    std::vector<uint8_t> kbytes = serialize(kplan);
    ConnexPlan kplan2 = deserialize_plan(kbytes, kdb);
    CHECK(serialize(kplan2) == kbytes);
    for (const auto& req : all_tuples(5, 2)) {
        Binding vb = kplan.whole().encode_request(req);
        CHECK(drain(kplan.answer(vb, nullptr)) ==
              drain(kplan2.answer(vb, nullptr)));
    }
}

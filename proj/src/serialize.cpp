#include "cqz/serialize.hpp"

#include <cstring>
#include <fstream>

#include "cqz/error.hpp"

namespace cqz {
namespace {

constexpr char kMagic[4] = {'C', 'Q', 'Z', '1'};
constexpr uint16_t kRepVersion = 1;
constexpr uint16_t kPlanVersion = 2;

class Writer {
public:
    std::vector<uint8_t> take() { return std::move(out_); }

    void bytes(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void num(T v) {  // little-endian on every supported target
        bytes(&v, sizeof(T));
    }
    void str(const std::string& s) {
        num<uint32_t>(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    std::vector<uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}

    void bytes(void* p, size_t n) {
        if (pos_ + n > b_.size())
            throw data_error("truncated index stream");
        std::memcpy(p, b_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T num() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }
    std::string str() {
        uint32_t n = num<uint32_t>();
        if (pos_ + n > b_.size())
            throw data_error("truncated index stream");
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::vector<uint8_t>& b_;
    size_t pos_ = 0;
};

void put_raw(Writer& w, const Raw& r) {
    if (r.kind == Raw::kInt) {
        w.num<uint8_t>(0);
        w.num<int64_t>(r.num);
    } else {
        w.num<uint8_t>(1);
        w.str(r.str);
    }
}

Raw get_raw(Reader& r) {
    uint8_t kind = r.num<uint8_t>();
    if (kind == 0) return Raw::of_int(r.num<int64_t>());
    if (kind == 1) return Raw::of_str(r.str());
    throw data_error("corrupt constant tag in index stream");
}

void put_codes(Writer& w, std::span<const Value> v) {
    for (Value x : v) w.num<uint32_t>(x);
}

std::vector<Value> get_codes(Reader& r, uint32_t n) {
    std::vector<Value> v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = r.num<uint32_t>();
    return v;
}

/* Domain dictionary: codes in trees and dictionaries refer to these
 * constants. */
void put_pool(Writer& w, const ValueDict& d) {
    w.num<uint64_t>(d.size());
    for (uint64_t i = 0; i < d.size(); ++i)
        put_raw(w, d.decode(static_cast<Value>(i)));
}

ValueDict get_pool(Reader& r) {
    uint64_t n = r.num<uint64_t>();
    std::vector<Raw> pool;
    pool.reserve(n);
    for (uint64_t i = 0; i < n; ++i) pool.push_back(get_raw(r));
    return ValueDict::build(pool);
}

/* View text plus the free order actually in effect. */
void put_view_header(Writer& w, const PreparedView& pv) {
    w.str(pv.view().source_text);
    w.num<uint32_t>(pv.mu());
    for (VarId x = 0; x < pv.mu(); ++x) w.str(pv.var_name(x));
    w.num<uint64_t>(pv.dsize());
}

struct ViewHeader {
    std::string text;
    uint32_t mu = 0;
    std::vector<std::string> free_order;
    uint64_t dsize = 0;
};

ViewHeader get_view_header(Reader& r) {
    ViewHeader h;
    h.text = r.str();
    h.mu = r.num<uint32_t>();
    for (uint32_t i = 0; i < h.mu; ++i) h.free_order.push_back(r.str());
    h.dsize = r.num<uint64_t>();
    return h;
}

void put_cover(Writer& w, const Cover& c) {
    w.num<uint32_t>(static_cast<uint32_t>(c.u.size()));
    for (double u : c.u) w.num<double>(u);
}

Cover get_cover(Reader& r, uint32_t expect) {
    Cover c;
    uint32_t nu = r.num<uint32_t>();
    if (nu != expect)
        throw data_error("cover size does not match the view");
    for (uint32_t i = 0; i < nu; ++i) c.u.push_back(r.num<double>());
    return c;
}

void put_tau_tree(Writer& w, double tau, const DelayTree& t) {
    w.num<double>(tau);
    w.num<double>(t.alpha);
    w.num<uint64_t>(t.nodes.size());
    for (const TreeNode& n : t.nodes) {
        w.num<uint32_t>(n.level);
        uint8_t flags = (n.ival.lo_open ? 1 : 0) | (n.ival.hi_open ? 2 : 0) |
                        (n.ival.forced_empty ? 4 : 0);
        w.num<uint8_t>(flags);
        put_codes(w, n.ival.lo);
        put_codes(w, n.ival.hi);
        w.num<uint8_t>(n.beta.empty() ? 0 : 1);
        put_codes(w, n.beta);
        w.num<int32_t>(n.left);
        w.num<int32_t>(n.right);
        w.num<double>(n.cost);
    }
}

/* Returns the tree with tau filled in; child pointers are range-checked. */
DelayTree get_tau_tree(Reader& r, uint32_t mu, double& tau) {
    tau = r.num<double>();
    DelayTree tree;
    tree.tau = tau;
    tree.alpha = r.num<double>();
    uint64_t nn = r.num<uint64_t>();
    for (uint64_t i = 0; i < nn; ++i) {
        TreeNode n;
        n.level = r.num<uint32_t>();
        uint8_t flags = r.num<uint8_t>();
        n.ival.lo_open = flags & 1;
        n.ival.hi_open = flags & 2;
        n.ival.forced_empty = flags & 4;
        n.ival.lo = get_codes(r, mu);
        n.ival.hi = get_codes(r, mu);
        if (r.num<uint8_t>()) n.beta = get_codes(r, mu);
        n.left = r.num<int32_t>();
        n.right = r.num<int32_t>();
        if (n.left >= 0 && static_cast<uint64_t>(n.left) >= nn)
            throw data_error("corrupt tree child pointer");
        if (n.right >= 0 && static_cast<uint64_t>(n.right) >= nn)
            throw data_error("corrupt tree child pointer");
        n.cost = r.num<double>();
        tree.nodes.push_back(std::move(n));
    }
    return tree;
}

void put_hdict(Writer& w, const HeavyDictionary& dict) {
    w.num<uint32_t>(dict.vb_arity());
    w.num<uint64_t>(dict.size());
    for (const auto& e : dict.entries()) {
        w.num<uint32_t>(e.node);
        put_codes(w, dict.vb_of(e));
        w.num<uint8_t>(e.bit);
    }
}

HeavyDictionary get_hdict(Reader& r, uint64_t nnodes, uint32_t expect_arity) {
    HeavyDictionary dict;
    dict.reset(r.num<uint32_t>());
    if (dict.vb_arity() != expect_arity)
        throw data_error("dictionary key arity does not match the view");
    uint64_t ne = r.num<uint64_t>();
    for (uint64_t i = 0; i < ne; ++i) {
        uint32_t node = r.num<uint32_t>();
        if (node >= nnodes && !(nnodes == 0 && node == 0))
            throw data_error("dictionary entry points outside the tree");
        std::vector<Value> vb = get_codes(r, dict.vb_arity());
        uint8_t bit = r.num<uint8_t>();
        if (bit > 1) throw data_error("corrupt dictionary bit");
        dict.insert(node, vb, bit);
    }
    dict.finalize();
    return dict;
}

uint16_t check_magic(Reader& r) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("not an index file (bad magic)");
    return r.num<uint16_t>();
}

}  // namespace

std::vector<uint8_t> serialize(const CompressedRep& rep) {
    const PreparedView& pv = rep.view();
    Writer w;
    w.bytes(kMagic, 4);
    w.num<uint16_t>(kRepVersion);
    put_pool(w, pv.dict());
    put_view_header(w, pv);
    put_cover(w, rep.cover());
    put_tau_tree(w, rep.tau(), rep.tree());
    put_hdict(w, rep.dict());
    return w.take();
}

CompressedRep deserialize(const std::vector<uint8_t>& bytes, const Database& db) {
    Reader r(bytes);
    uint16_t version = check_magic(r);
    if (version == kPlanVersion)
        throw data_error("this file holds a query plan, not a single view index");
    if (version != kRepVersion)
        throw data_error("unsupported index version " + std::to_string(version));

    ValueDict stored = get_pool(r);
    if (!(stored == db.dict()))
        throw data_error("index was built over a different domain");

    ViewHeader h = get_view_header(r);
    if (h.dsize != db.total_tuples())
        throw data_error("index was built over a different database");

    AdornedView view = parse_adorned_view(h.text);
    if (h.mu > 0) reorder_free(view, h.free_order);
    PreparedView pv(view, db);

    Cover cover = get_cover(r, pv.num_edges());
    double tau = 0;
    DelayTree tree = get_tau_tree(r, h.mu, tau);
    HeavyDictionary dict =
        get_hdict(r, tree.nodes.size(), pv.num_vars() - pv.mu());
    if (!r.done()) throw data_error("trailing bytes after index payload");

    return CompressedRep(std::move(pv), std::move(cover), tau, std::move(tree),
                         std::move(dict));
}

std::vector<uint8_t> serialize(const ConnexPlan& plan) {
    Writer w;
    w.bytes(kMagic, 4);
    w.num<uint16_t>(kPlanVersion);
    put_pool(w, plan.whole().dict());
    put_view_header(w, plan.whole());
    w.str(plan.decomp().to_text());
    uint32_t n = plan.decomp().num_bags();
    w.num<uint32_t>(n);
    for (double d : plan.delta()) w.num<double>(d);
    for (uint32_t t = 1; t < n; ++t) {
        const CompressedRep& rep = plan.bag_rep(t);
        put_cover(w, rep.cover());
        put_tau_tree(w, rep.tau(), rep.tree());
        put_hdict(w, rep.dict());
    }
    return w.take();
}

ConnexPlan deserialize_plan(const std::vector<uint8_t>& bytes,
                            const Database& db) {
    Reader r(bytes);
    uint16_t version = check_magic(r);
    if (version == kRepVersion)
        throw data_error("this file holds a single view index, not a query plan");
    if (version != kPlanVersion)
        throw data_error("unsupported index version " + std::to_string(version));

    ValueDict stored = get_pool(r);
    if (!(stored == db.dict()))
        throw data_error("index was built over a different domain");

    ViewHeader h = get_view_header(r);
    if (h.dsize != db.total_tuples())
        throw data_error("index was built over a different database");

    /* The decomposition is validated against the view as declared; the free
     * permutation only affects the whole view's column order. */
    AdornedView view = parse_adorned_view(h.text);
    ConnexDecomposition decomp = load_decomposition(r.str(), view);
    if (h.mu > 0) reorder_free(view, h.free_order);
    PreparedView whole(view, db);

    uint32_t n = r.num<uint32_t>();
    if (n != decomp.num_bags())
        throw data_error("plan bag count does not match its decomposition");
    std::vector<double> delta;
    for (uint32_t t = 0; t < n; ++t) delta.push_back(r.num<double>());

    std::vector<CompressedRep> reps;
    for (uint32_t t = 1; t < n; ++t) {
        PreparedView pv = prepare_bag(decomp, t, whole);
        Cover cover = get_cover(r, pv.num_edges());
        double tau = 0;
        DelayTree tree = get_tau_tree(r, pv.mu(), tau);
        HeavyDictionary dict =
            get_hdict(r, tree.nodes.size(), pv.num_vars() - pv.mu());
        reps.emplace_back(std::move(pv), std::move(cover), tau, std::move(tree),
                          std::move(dict));
    }
    if (!r.done()) throw data_error("trailing bytes after index payload");

    std::vector<uint64_t> sizes;
    for (uint32_t e = 0; e < whole.num_edges(); ++e)
        sizes.push_back(whole.edge(e).size());
    WidthReport width = delta_width(decomp, delta, sizes);

    return ConnexPlan(std::move(whole), std::move(decomp), std::move(delta),
                      std::move(reps), std::move(width));
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw data_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw data_error("short write to " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot read " + path);
    std::vector<uint8_t> out((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    return out;
}

}  // namespace cqz

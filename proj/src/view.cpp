#include "cqz/view.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "cqz/error.hpp"

namespace cqz {
namespace {

/* Minimal recursive-descent tokenizer for the view grammar. */
struct Lexer {
    const std::string& text;
    size_t pos = 0;

    explicit Lexer(const std::string& t) : text(t) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
    }
    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    bool eat_implies() {
        skip_ws();
        if (pos + 1 < text.size() && text[pos] == ':' && text[pos + 1] == '-') {
            pos += 2;
            return true;
        }
        return false;
    }
    void expect(char c, const char* what) {
        if (!eat(c)) throw data_error(std::string("view syntax: expected ") + what);
    }
    std::string ident() {
        skip_ws();
        size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (pos == start) throw data_error("view syntax: expected identifier");
        return text.substr(start, pos - start);
    }
    bool peek_quote() {
        skip_ws();
        return pos < text.size() && text[pos] == '\'';
    }
    bool peek_digit_or_minus() {
        skip_ws();
        return pos < text.size() &&
               (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '-');
    }
    Raw quoted() {
        expect('\'', "opening quote");
        size_t start = pos;
        while (pos < text.size() && text[pos] != '\'') ++pos;
        if (pos == text.size()) throw data_error("view syntax: unterminated string");
        Raw r = Raw::of_str(text.substr(start, pos - start));
        ++pos;
        return r;
    }
    Raw integer() {
        skip_ws();
        size_t start = pos;
        if (pos < text.size() && text[pos] == '-') ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
            ++pos;
        if (pos == start || (text[start] == '-' && pos == start + 1))
            throw data_error("view syntax: expected integer");
        return Raw::of_int(std::stoll(text.substr(start, pos - start)));
    }
};

RewrittenAtom rewrite(const Atom& atom) {
    RewrittenAtom out;
    out.rel = atom.rel;
    for (uint32_t col = 0; col < atom.terms.size(); ++col) {
        const Term& t = atom.terms[col];
        if (const Raw* c = std::get_if<Raw>(&t)) {
            out.const_eq.emplace_back(col, *c);
            continue;
        }
        const std::string& var = std::get<std::string>(t);
        auto it = std::find(out.vars.begin(), out.vars.end(), var);
        if (it == out.vars.end()) {
            out.vars.push_back(var);
            out.keep_cols.push_back(col);
        } else {
            uint32_t first = out.keep_cols[it - out.vars.begin()];
            out.col_eq.emplace_back(first, col);
        }
    }
    return out;
}

}  // namespace

bool AdornedView::is_full() const {
    for (const auto& a : atoms)
        for (const auto& v : a.vars)
            if (std::find(head.begin(), head.end(), v) == head.end()) return false;
    return true;
}

AdornedView parse_adorned_view(const std::string& text) {
    Lexer lx(text);
    AdornedView v;
    v.source_text = text;
    v.name = lx.ident();
    lx.expect('^', "'^' before adornment");
    v.adorn = lx.ident();
    for (char c : v.adorn)
        if (c != 'b' && c != 'f')
            throw data_error("malformed adornment string: " + v.adorn);
    lx.expect('(', "'(' before head variables");
    while (true) {
        v.head.push_back(lx.ident());
        if (!lx.eat(',')) break;
    }
    lx.expect(')', "')' after head variables");
    if (!lx.eat_implies()) throw data_error("view syntax: expected ':-'");
    while (true) {
        Atom a;
        a.rel = lx.ident();
        lx.expect('(', "'(' before atom terms");
        while (true) {
            if (lx.peek_quote())
                a.terms.push_back(lx.quoted());
            else if (lx.peek_digit_or_minus())
                a.terms.push_back(lx.integer());
            else
                a.terms.push_back(lx.ident());
            if (!lx.eat(',')) break;
        }
        lx.expect(')', "')' after atom terms");
        v.body.push_back(std::move(a));
        if (!lx.eat(',')) break;
    }
    lx.expect('.', "terminating '.'");
    lx.skip_ws();
    if (lx.pos != text.size())
        throw data_error("view syntax: trailing input after '.'");

    if (v.adorn.size() != v.head.size())
        throw data_error("malformed adornment string: length " +
                         std::to_string(v.adorn.size()) + " for " +
                         std::to_string(v.head.size()) + " head variables");
    std::set<std::string> seen;
    for (const auto& h : v.head)
        if (!seen.insert(h).second)
            throw data_error("duplicate head variable: " + h);

    for (const auto& a : v.body) v.atoms.push_back(rewrite(a));

    std::set<std::string> body_vars;
    for (const auto& a : v.atoms) body_vars.insert(a.vars.begin(), a.vars.end());
    for (const auto& h : v.head)
        if (!body_vars.count(h))
            throw data_error("head variable absent from body: " + h);
    return v;
}

void reorder_free(AdornedView& view, const std::vector<std::string>& order) {
    std::vector<size_t> free_pos;
    for (size_t i = 0; i < view.head.size(); ++i)
        if (!view.is_bound(i)) free_pos.push_back(i);
    if (order.size() != free_pos.size())
        throw data_error("free order must list every free variable once");
    std::set<std::string> seen;
    std::vector<std::string> head = view.head;
    for (size_t k = 0; k < order.size(); ++k) {
        const std::string& v = order[k];
        if (!seen.insert(v).second)
            throw data_error("free order repeats variable " + v);
        size_t at = view.head.size();
        for (size_t p : free_pos)
            if (view.head[p] == v) at = p;
        if (at == view.head.size())
            throw data_error("free order names " + v +
                             ", which is not a free head variable");
        head[free_pos[k]] = v;
    }
    view.head = std::move(head);
}

std::optional<uint32_t> GridAxis::index_of(Value v) const {
    auto it = std::lower_bound(values.begin(), values.end(), v);
    if (it == values.end() || *it != v) return std::nullopt;
    return static_cast<uint32_t>(it - values.begin());
}

bool FreeGrid::any_axis_empty() const {
    for (const auto& a : axes)
        if (a.values.empty()) return true;
    return false;
}

void PreparedView::assign_var_ids() {
    for (const auto& a : view_.atoms)
        for (const auto& v : a.vars)
            if (std::find(view_.head.begin(), view_.head.end(), v) == view_.head.end())
                throw data_error("view " + view_.name +
                                 " is not full: body variable " + v +
                                 " missing from head");

    /* Variable ids: free variables first in declared order, then bound. */
    for (size_t i = 0; i < view_.head.size(); ++i)
        if (!view_.is_bound(i)) var_names_.push_back(view_.head[i]);
    mu_ = static_cast<uint32_t>(var_names_.size());
    for (size_t i = 0; i < view_.head.size(); ++i)
        if (view_.is_bound(i)) var_names_.push_back(view_.head[i]);
    edges_of_.assign(var_names_.size(), {});
}

PreparedView::PreparedView(const AdornedView& view, const Database& db)
    : view_(view), dict_(db.dict()), dsize_(db.total_tuples()) {
    assign_var_ids();
    for (uint32_t e = 0; e < view_.atoms.size(); ++e) {
        const RewrittenAtom& a = view_.atoms[e];
        if (!db.has_table(a.rel)) throw data_error("unknown relation: " + a.rel);
        const BaseTable& base = db.table(a.rel);
        uint32_t atom_arity = static_cast<uint32_t>(view_.body[e].terms.size());
        bool ambiguous_empty = base.nrows == 0 && base.arity == 0;
        if (!ambiguous_empty && base.arity != atom_arity)
            throw data_error("relation " + a.rel + " has arity " +
                             std::to_string(base.arity) + ", atom uses " +
                             std::to_string(atom_arity));

        std::vector<VarId> schema;
        for (const auto& v : a.vars) schema.push_back(var_id(v));

        std::vector<std::pair<uint32_t, Value>> want_const;
        bool dead = false;
        for (const auto& [col, raw] : a.const_eq) {
            Value enc = dict_.encode(raw);
            if (enc == kNoValue) dead = true;  // constant absent from db
            want_const.emplace_back(col, enc);
        }

        std::vector<Value> flat;
        uint32_t matched = 0;
        if (!dead && !ambiguous_empty) {
            for (uint32_t i = 0; i < base.nrows; ++i) {
                auto row = base.row(i);
                bool ok = true;
                for (const auto& [col, enc] : want_const)
                    if (row[col] != enc) { ok = false; break; }
                for (const auto& [c1, c2] : a.col_eq)
                    if (ok && row[c1] != row[c2]) ok = false;
                if (!ok) continue;
                ++matched;
                for (uint32_t c : a.keep_cols) flat.push_back(row[c]);
            }
        }
        /* An all-constant atom projects to arity 0; a non-empty payload
         * marker keeps "the empty tuple is present" representable. */
        if (schema.empty() && matched > 0) flat.push_back(0);
        edges_.emplace_back(a.rel + "@" + std::to_string(e), schema,
                            std::move(flat));
        for (VarId x : schema) edges_of_[x].push_back(e);
    }
    build_indexes_and_grid();
}

PreparedView::PreparedView(const AdornedView& view, ValueDict dict,
                           uint64_t dsize, std::vector<EdgePayload> payloads)
    : view_(view), dict_(std::move(dict)), dsize_(dsize) {
    assign_var_ids();
    CQZ_CHECK(payloads.size() == view_.atoms.size(),
              "one payload per atom required");
    for (uint32_t e = 0; e < view_.atoms.size(); ++e) {
        const RewrittenAtom& a = view_.atoms[e];
        CQZ_CHECK(a.const_eq.empty() && a.col_eq.empty(),
                  "payload construction needs constant/repeat free atoms");
        std::vector<VarId> schema;
        for (const auto& v : a.vars) schema.push_back(var_id(v));
        edges_.emplace_back(a.rel + "@" + std::to_string(e), schema,
                            std::move(payloads[e].flat));
        for (VarId x : schema) edges_of_[x].push_back(e);
    }
    build_indexes_and_grid();
}

void PreparedView::build_indexes_and_grid() {
    /* Both sorted key orders. Free-major is simply ascending variable id
     * because ids are assigned free-first; bound-major flips the groups. */
    for (uint32_t e = 0; e < edges_.size(); ++e) {
        const auto& schema = edges_[e].schema();
        std::vector<uint32_t> cols(schema.size());
        for (uint32_t i = 0; i < cols.size(); ++i) cols[i] = i;
        auto fm = cols;
        std::sort(fm.begin(), fm.end(),
                  [&](uint32_t a, uint32_t b) { return schema[a] < schema[b]; });
        auto bm = cols;
        std::sort(bm.begin(), bm.end(), [&](uint32_t a, uint32_t b) {
            bool fa = is_free(schema[a]), fb = is_free(schema[b]);
            if (fa != fb) return !fa;  // bound columns first
            return schema[a] < schema[b];
        });
        free_major_.push_back(edges_[e].add_index(fm));
        bound_major_.push_back(edges_[e].add_index(bm));
    }

    /* Active domain per free variable, over the rewritten relations. */
    grid_.axes.resize(mu_);
    for (VarId x = 0; x < mu_; ++x) {
        std::vector<Value>& vals = grid_.axes[x].values;
        for (uint32_t e : edges_of_[x]) {
            const auto& schema = edges_[e].schema();
            uint32_t col = static_cast<uint32_t>(
                std::find(schema.begin(), schema.end(), x) - schema.begin());
            for (uint32_t i = 0; i < edges_[e].size(); ++i)
                vals.push_back(edges_[e].row(i)[col]);
        }
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    }
}

VarId PreparedView::var_id(const std::string& name) const {
    auto it = std::find(var_names_.begin(), var_names_.end(), name);
    if (it == var_names_.end()) throw data_error("unknown variable: " + name);
    return static_cast<VarId>(it - var_names_.begin());
}

std::vector<Value> PreparedView::encode_request(const std::vector<Raw>& raw) const {
    if (raw.size() != num_vars() - mu_)
        throw data_error("access request has " + std::to_string(raw.size()) +
                         " values, view has " + std::to_string(num_vars() - mu_) +
                         " bound variables");
    std::vector<Value> out;
    for (const auto& r : raw) out.push_back(dict_.encode(r));
    return out;
}

std::vector<Value> PreparedView::encode_request(
    const std::vector<int64_t>& ints) const {
    std::vector<Raw> raw;
    for (int64_t v : ints) raw.push_back(Raw::of_int(v));
    return encode_request(raw);
}

}  // namespace cqz

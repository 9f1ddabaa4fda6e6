#include "sten/socialgraph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace sten {

namespace {

std::vector<int> cap_list(std::vector<int> lst, int cap, std::mt19937_64& rng) {
    if (static_cast<int>(lst.size()) <= cap) return lst;
    for (int k = 0; k < cap; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, lst.size() - 1);
        std::swap(lst[k], lst[pick(rng)]);
    }
    lst.resize(cap);
    std::sort(lst.begin(), lst.end());
    return lst;
}

// Users reachable by an exactly-(order-1)-hop walk from the interactors of an
// item; walks may revisit nodes, which keeps the relation symmetric.
std::set<int> user_frontier(const SocialGraph& graph, const std::set<int>& start, int hops) {
    std::set<int> cur = start;
    for (int h = 0; h < hops; ++h) {
        std::set<int> next;
        for (int u : cur)
            for (int v : graph.user_adjacency[u]) next.insert(v);
        cur = std::move(next);
    }
    return cur;
}

} // namespace

std::vector<std::vector<int>> metapath_neighbors_uncapped(const SocialGraph& graph,
                                                          int order) {
    int num_items = 0;
    for (const auto& its : graph.user_items)
        for (int i : its) num_items = std::max(num_items, i + 1);
    std::vector<std::set<int>> interactors(num_items);
    for (std::size_t u = 0; u < graph.user_items.size(); ++u)
        for (int i : graph.user_items[u]) interactors[i].insert(static_cast<int>(u));

    std::vector<std::vector<int>> out(num_items);
    for (int i = 0; i < num_items; ++i) {
        if (interactors[i].empty()) continue;
        auto frontier = user_frontier(graph, interactors[i], order - 1);
        std::set<int> nb;
        for (int u : frontier)
            for (int j : graph.user_items[u])
                if (j != i) nb.insert(j);
        out[i].assign(nb.begin(), nb.end());
    }
    return out;
}

MetaPathIndex build_metapath_neighbors(const SocialGraph& graph, int max_order, int cap,
                                       std::uint64_t seed) {
    if (max_order < 1) throw Error("build_metapath_neighbors: max_order must be >= 1");
    MetaPathIndex idx;
    idx.max_order = max_order;
    idx.cap = cap;
    for (int k = 1; k <= max_order; ++k) {
        auto full = metapath_neighbors_uncapped(graph, k);
        for (std::size_t i = 0; i < full.size(); ++i) {
            std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(k) * 131ULL + i);
            full[i] = cap_list(std::move(full[i]), cap, rng);
        }
        idx.neighbors.push_back(std::move(full));
    }
    // pad shorter orders so every order covers the same item range
    std::size_t n = 0;
    for (auto& o : idx.neighbors) n = std::max(n, o.size());
    for (auto& o : idx.neighbors) o.resize(n);
    return idx;
}

void MetaPathIndex::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("MetaPathIndex::save: cannot open " + path);
    out << "stenmeta 1\n" << max_order << ' ' << cap << ' ' << num_items() << '\n';
    for (int k = 0; k < max_order; ++k) {
        for (std::size_t i = 0; i < neighbors[k].size(); ++i) {
            out << (k + 1) << ' ' << i << ' ' << neighbors[k][i].size();
            for (int j : neighbors[k][i]) out << ' ' << j;
            out << '\n';
        }
    }
}

MetaPathIndex MetaPathIndex::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MetaPathIndex::load: cannot open " + path);
    std::string magic;
    int version;
    in >> magic >> version;
    if (magic != "stenmeta" || version != 1)
        throw Error("MetaPathIndex::load: unrecognized format in " + path);
    MetaPathIndex idx;
    int items;
    in >> idx.max_order >> idx.cap >> items;
    idx.neighbors.assign(idx.max_order, std::vector<std::vector<int>>(items));
    int order, item, count;
    while (in >> order >> item >> count) {
        auto& lst = idx.neighbors[order - 1][item];
        lst.resize(count);
        for (int& v : lst) in >> v;
    }
    return idx;
}

namespace {

// Shared attention-aggregation body for Eq. 5/6 and Eq. 7/8: logits are
// sigma(v . [W h_row || W h_col]) restricted to the neighbor mask.
TensorPtr attention_block(Tape& tape, const TensorPtr& table, const TensorPtr& W,
                          const TensorPtr& bias, const TensorPtr& v, const Mask& mask,
                          TensorPtr* attention_out) {
    const int n = table->rows();
    auto Wh = matmul(tape, table, W, true);
    auto va = gather_rows(tape, v, {0});
    auto vb = gather_rows(tape, v, {1});
    auto a1 = matmul(tape, Wh, va, true); // n x 1, contribution of the row side
    auto a2 = matmul(tape, Wh, vb, true); // n x 1, contribution of the col side
    auto ones_row = make_tensor({1, n}, std::vector<double>(n, 1.0));
    auto ones_col = make_tensor({n, 1}, std::vector<double>(n, 1.0));
    auto logits = sigmoid(tape, add(tape, matmul(tape, a1, ones_row),
                                    matmul(tape, ones_col, a2, true)));
    auto A = masked_softmax(tape, logits, mask);
    if (attention_out) *attention_out = A;
    return sigmoid(tape, add_rowvec(tape, matmul(tape, A, Wh), bias));
}

} // namespace

TensorPtr user_aggregate(Tape& tape, const TensorPtr& user_table,
                         const GraphLayerParams& params, const SocialGraph& graph,
                         TensorPtr* attention_out) {
    const int n = user_table->rows();
    Mask mask(n, n);
    for (int u = 0; u < n; ++u) {
        const auto& adj = graph.user_adjacency[u];
        if (adj.empty()) {
            mask.set(u, u, true); // friendless self-fallback
        } else {
            for (int j : adj) mask.set(u, j, true);
        }
    }
    return attention_block(tape, user_table, params.W_U, params.b_U, params.v_u, mask,
                           attention_out);
}

TensorPtr item_aggregate(Tape& tape, const TensorPtr& item_table,
                         const GraphLayerParams& params, const MetaPathIndex& index) {
    const int n = item_table->rows(); // |I| + 1 including the padding row
    const int l = index.max_order;
    if (l < 1) throw Error("item_aggregate: index has no orders");
    TensorPtr acc;
    for (int k = 0; k < l; ++k) {
        Mask mask(n, n);
        for (int i = 0; i < n; ++i) {
            const auto& nb = (i < static_cast<int>(index.neighbors[k].size()))
                                 ? index.neighbors[k][i]
                                 : std::vector<int>{};
            if (nb.empty()) {
                mask.set(i, i, true); // neighborless (and padding) self-fallback
            } else {
                for (int j : nb) mask.set(i, j, true);
            }
        }
        auto Hk = attention_block(tape, item_table, params.W_I, params.b_I, params.v_i,
                                  mask, nullptr);
        auto weighted = scale_by_entry(tape, Hk, params.order_weights, k);
        acc = acc ? add(tape, acc, weighted) : weighted;
    }
    return affine(tape, acc, 1.0 / static_cast<double>(l), 0.0);
}

} // namespace sten

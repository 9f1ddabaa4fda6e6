#pragma once

// Social heterogeneous graph embedding layer: attention aggregation over
// user-user edges and k-order meta-path item neighbors with order-level
// normalization.

#include "sten/data.hpp"
#include "sten/tensor.hpp"

#include <string>
#include <vector>

namespace sten {

struct GraphLayerParams {
    TensorPtr W_U; // d x d
    TensorPtr b_U; // d
    TensorPtr v_u; // 2 x d (two halves of the concat weight vector)
    TensorPtr W_I; // d x d
    TensorPtr b_I; // d
    TensorPtr v_i; // 2 x d
    TensorPtr order_weights; // c, length max_order
};

struct MetaPathIndex {
    int max_order = 0;
    int cap = 0;
    // neighbors[k-1][item] = sorted k-order meta-path neighbors, capped
    std::vector<std::vector<std::vector<int>>> neighbors;

    int num_items() const {
        return neighbors.empty() ? 0 : static_cast<int>(neighbors[0].size());
    }
    void save(const std::string& path) const;
    static MetaPathIndex load(const std::string& path);
};

// Order-1 neighbors of i are items co-interacted by a single user; order-k
// items are reached through a (k-1)-hop user walk from an interactor of i.
// Lists above `cap` are uniformly down-sampled, deterministic given the seed.
MetaPathIndex build_metapath_neighbors(const SocialGraph& graph, int max_order, int cap,
                                       std::uint64_t seed);

// Uncapped neighbor sets at one order; used by symmetry property checks.
std::vector<std::vector<int>> metapath_neighbors_uncapped(const SocialGraph& graph,
                                                          int order);

// h_u for all users (|U| x d). Friendless users fall back to attending their
// own embedding. Optionally exposes the attention matrix.
TensorPtr user_aggregate(Tape& tape, const TensorPtr& user_table,
                         const GraphLayerParams& params, const SocialGraph& graph,
                         TensorPtr* attention_out = nullptr);

// Meta-path based item representations ((|I|+1) x d, including the padding
// row which only ever attends to itself).
TensorPtr item_aggregate(Tape& tape, const TensorPtr& item_table,
                         const GraphLayerParams& params, const MetaPathIndex& index);

} // namespace sten

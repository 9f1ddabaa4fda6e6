#pragma once

// Parameter registry and initialization, the general-interest head, hybrid
// fusion and item scoring, the full per-user forward pass with ablation
// switches, and the checkpoint format.

#include "sten/data.hpp"
#include "sten/excitation.hpp"
#include "sten/socialgraph.hpp"
#include "sten/tensor.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sten {

struct ModelConfig {
    int d = 16;           // embedding dimension
    int M = 10;           // sampled friends
    int l_m = 10;         // friend window
    int l_max = 50;       // max user sequence length
    int max_order = 2;    // meta-path orders
    int metapath_cap = 50;
    bool no_GE = false;
    bool no_MT = false;
    bool no_ST = false;
    bool no_TC = false;
    bool log_dt = false;
    bool squared_reg = false;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ModelParams {
    int num_users = 0;
    int num_items = 0; // excluding the padding row
    TensorPtr user_table; // |U| x d
    TensorPtr item_table; // (|I|+1) x d, last row is padding
    GraphLayerParams graph;
    MutualParams mutual;
    SelfParams self_net;
    TensorPtr Wg_Q, Wg_K, Wg_V; // general-interest attention, d x d
    TensorPtr W_u;              // d x 2d fusion

    // Stable name -> tensor pairs; the checkpoint and optimizer iterate this.
    std::vector<std::pair<std::string, TensorPtr>> registry() const;
    long param_count() const;
};

// Weights ~ N(0, 0.01^2) deterministically from the seed; beta/mu scalars and
// biases start at 0, order weights at 1.
ModelParams init_params(const ModelConfig& cfg, int num_users, int num_items);
// Closed-form count the initializer must match.
long expected_param_count(const ModelConfig& cfg, int num_users, int num_items);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg);
ModelParams load_checkpoint(const std::string& path, ModelConfig* cfg_out = nullptr);

// ---- prediction head ------------------------------------------------------

// Vanilla attention with h_n as the single query row over the item sequence.
TensorPtr general_interest(Tape& tape, const TensorPtr& h_n, const TensorPtr& item_seq,
                           const TensorPtr& Wq, const TensorPtr& Wk, const TensorPtr& Wv,
                           TensorPtr* attention_out = nullptr);
// h_hybrid = W_u (h_s || h_g)
TensorPtr fuse(Tape& tape, const TensorPtr& h_s, const TensorPtr& h_g,
               const TensorPtr& W_u);
// Pre-softmax scores over real items (padding row excluded); pass
// probabilities=true for the softmax of Eq-style next-item probabilities.
TensorPtr score_items(Tape& tape, const TensorPtr& h_hybrid, const TensorPtr& item_table,
                      int num_items, bool probabilities = false);

// ---- full forward ---------------------------------------------------------

// Graph-layer outputs shared by every user in a batch. Under no_GE these are
// the raw embedding tables.
struct ForwardContext {
    TensorPtr hU;
    TensorPtr hI;
    TensorPtr user_attention; // |U| x |U| graph attention, for export
};

ForwardContext graph_forward(Tape& tape, const ModelParams& params,
                             const ModelConfig& cfg, const SocialGraph& graph,
                             const MetaPathIndex& index, double dropout_ratio = 0.0,
                             std::mt19937_64* dropout_rng = nullptr);

struct AttentionCapture {
    TensorPtr mutual;        // l x (d_F + l)
    int mutual_d_F = 0;
    TensorPtr self_temporal; // H3: with beta/mu/dt terms
    TensorPtr self_plain;    // H4: same params, temporal terms removed
    std::vector<int> target_items;
    std::vector<double> target_times;
    std::vector<int> friend_items;
    std::vector<double> friend_times;
    std::vector<std::uint8_t> friend_pad;
};

struct UserForward {
    TensorPtr h_hybrid; // 1 x d
    TensorPtr logits;   // 1 x |I|, only when requested
    TensorPtr lambdas;  // l x 1 per-event intensities; null under no_TC
    // l x d, only when requested: row i is the hybrid representation built
    // from events 0..i, i.e. the prediction head for the item at position
    // i + 1; the last row equals h_hybrid
    TensorPtr position_heads;
    std::vector<double> times; // input event times (normalized days)
    int seq_len = 0;
};

// Consumes the first `prefix_len` events of the user's sequence (truncated to
// the most recent l_max) and the given friend sample.
UserForward forward_user(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                         const ForwardContext& ctx, const Dataset& dataset, int user,
                         const std::vector<int>& friends, int prefix_len,
                         double interval_cap, bool want_logits,
                         AttentionCapture* capture = nullptr,
                         bool want_position_heads = false);

} // namespace sten

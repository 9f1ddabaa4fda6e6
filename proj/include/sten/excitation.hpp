#pragma once

// Mutually exciting temporal attention over friends' event windows and
// self-exciting temporal attention over the user's own sequence, both with
// strict temporal masking, plus the scalar intensity readout feeding the
// point-process likelihood.

#include "sten/tensor.hpp"

#include <cstdint>
#include <vector>

namespace sten {

struct MutualParams {
    TensorPtr W_Q, W_K, W_V; // d x d
    TensorPtr beta, mu;      // scalars, unconstrained in sign
};

struct SelfParams {
    TensorPtr W_Q, W_K, W_V; // d x d
    TensorPtr beta, mu;      // scalars
    TensorPtr w_lambda;      // 1 x d intensity readout
    TensorPtr b_lambda;      // scalar
};

// visible(i, w) <=> t_w <= t_i and source w is not padding. Ties are visible
// for friend events.
Mask build_masks(const std::vector<double>& target_times,
                 const std::vector<double>& source_times,
                 const std::vector<std::uint8_t>& pad_mask);

// Strict causality: position i sees positions j < i; position 0 falls back to
// its own value row.
Mask build_self_mask(int length);

struct TemporalOptions {
    bool use_temporal = true;   // false under the w/o TC ablation
    double interval_cap = 0.0;  // 0 disables clipping
    bool log_scale = false;     // log1p(dt) instead of raw dt
};

struct MutualResult {
    TensorPtr T_m;       // l x d social mutual temporal representations
    TensorPtr attention; // l x (d_F + l); the last l columns are fallback slots
    int d_F = 0;
};

// Row i of T_m = sum_k A[i][k] * W_V h^F_k. Rows with no visible friend event
// attend to their own value row instead.
MutualResult mutual_excite(Tape& tape, const TensorPtr& target_embeds,
                           const std::vector<double>& target_times,
                           const TensorPtr& friend_embeds,
                           const std::vector<double>& friend_times,
                           const std::vector<std::uint8_t>& friend_pad,
                           const MutualParams& params, const TemporalOptions& opts);

struct SelfResult {
    TensorPtr T_S;       // l x d
    TensorPtr h_s;       // 1 x d, the last row of T_S
    TensorPtr attention; // l x l
};

SelfResult self_excite(Tape& tape, const TensorPtr& T_m,
                       const std::vector<double>& times, const SelfParams& params,
                       const TemporalOptions& opts);

// Strictly positive per-event intensities: softplus(T_S w_lambda + b_lambda).
TensorPtr scalar_intensity(Tape& tape, const TensorPtr& T_S, const SelfParams& params);

} // namespace sten

#include "sten/excitation.hpp"

#include <cmath>

namespace sten {

namespace {

double scaled_dt(double dt, const TemporalOptions& opts) {
    if (opts.interval_cap > 0.0) dt = std::min(dt, opts.interval_cap);
    return opts.log_scale ? std::log1p(dt) : dt;
}

} // namespace

Mask build_masks(const std::vector<double>& target_times,
                 const std::vector<double>& source_times,
                 const std::vector<std::uint8_t>& pad_mask) {
    const int l = static_cast<int>(target_times.size());
    const int s = static_cast<int>(source_times.size());
    if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != s)
        throw Error("build_masks: pad mask length does not match sources");
    Mask m(l, s);
    for (int i = 0; i < l; ++i)
        for (int w = 0; w < s; ++w) {
            const bool padded = !pad_mask.empty() && pad_mask[w];
            m.set(i, w, !padded && source_times[w] <= target_times[i]);
        }
    return m;
}

Mask build_self_mask(int length) {
    if (length < 1) throw Error("build_self_mask: empty sequence");
    Mask m(length, length);
    for (int i = 1; i < length; ++i)
        for (int j = 0; j < i; ++j) m.set(i, j, true);
    m.set(0, 0, true); // fallback: first position keeps its own value row
    return m;
}

MutualResult mutual_excite(Tape& tape, const TensorPtr& target_embeds,
                           const std::vector<double>& target_times,
                           const TensorPtr& friend_embeds,
                           const std::vector<double>& friend_times,
                           const std::vector<std::uint8_t>& friend_pad,
                           const MutualParams& params, const TemporalOptions& opts) {
    const int l = target_embeds->rows();
    const int d = target_embeds->cols();
    const int d_F = friend_embeds->rows();
    if (friend_embeds->cols() != d)
        throw Error("mutual_excite: friend embeds " + friend_embeds->shape_str() +
                    " vs target embeds " + target_embeds->shape_str());
    if (static_cast<int>(target_times.size()) != l ||
        static_cast<int>(friend_times.size()) != d_F)
        throw Error("mutual_excite: time vectors do not match embeddings");

    Mask base = build_masks(target_times, friend_times, friend_pad);

    // Sources are the friend windows plus the target's own events; the extra
    // self column of row i opens only when no friend event is visible, which
    // realizes the own-embedding fallback inside one softmax.
    auto src = concat_rows(tape, friend_embeds, target_embeds);
    Mask mask(l, d_F + l);
    for (int i = 0; i < l; ++i) {
        bool any = false;
        for (int w = 0; w < d_F; ++w) {
            const bool v = base.at(i, w);
            mask.set(i, w, v);
            any = any || v;
        }
        if (!any) mask.set(i, d_F + i, true);
    }

    auto Q = matmul(tape, target_embeds, params.W_Q, true);
    auto K = matmul(tape, src, params.W_K, true);
    auto V = matmul(tape, src, params.W_V, true);
    auto logits = affine(tape, matmul(tape, Q, K, true), 1.0 / std::sqrt(static_cast<double>(d)), 0.0);
    if (opts.use_temporal) {
        auto dt = make_tensor({l, d_F + l});
        for (int i = 0; i < l; ++i)
            for (int w = 0; w < d_F; ++w)
                if (mask.at(i, w))
                    dt->at(i, w) = scaled_dt(target_times[i] - friend_times[w], opts);
        logits = add(tape, logits, scale_const(tape, params.beta, dt));
        logits = add_scalar(tape, logits, params.mu);
    }
    MutualResult res;
    res.d_F = d_F;
    res.attention = masked_softmax(tape, logits, mask);
    res.T_m = matmul(tape, res.attention, V);
    return res;
}

SelfResult self_excite(Tape& tape, const TensorPtr& T_m,
                       const std::vector<double>& times, const SelfParams& params,
                       const TemporalOptions& opts) {
    const int l = T_m->rows();
    if (l < 1) throw Error("self_excite: empty sequence");
    if (static_cast<int>(times.size()) != l)
        throw Error("self_excite: time vector does not match sequence");
    const int d = T_m->cols();

    Mask mask = build_self_mask(l);
    auto Q = matmul(tape, T_m, params.W_Q, true);
    auto K = matmul(tape, T_m, params.W_K, true);
    auto V = matmul(tape, T_m, params.W_V, true);
    auto logits = affine(tape, matmul(tape, Q, K, true), 1.0 / std::sqrt(static_cast<double>(d)), 0.0);
    if (opts.use_temporal) {
        auto dt = make_tensor({l, l});
        for (int i = 1; i < l; ++i)
            for (int j = 0; j < i; ++j) dt->at(i, j) = scaled_dt(times[i] - times[j], opts);
        logits = add(tape, logits, scale_const(tape, params.beta, dt));
        logits = add_scalar(tape, logits, params.mu);
    }
    SelfResult res;
    res.attention = masked_softmax(tape, logits, mask);
    res.T_S = matmul(tape, res.attention, V);
    res.h_s = slice_rows(tape, res.T_S, l - 1, 1);
    return res;
}

TensorPtr scalar_intensity(Tape& tape, const TensorPtr& T_S, const SelfParams& params) {
    auto pre = add_scalar(tape, matmul(tape, T_S, params.w_lambda, true), params.b_lambda);
    return softplus(tape, pre);
}

} // namespace sten

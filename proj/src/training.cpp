#include "sten/training.hpp"

#include "sten/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>

namespace sten {

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw Error("TrainConfig: learning_rate must be positive");
    if (gamma < 0) throw Error("TrainConfig: gamma must be non-negative");
    if (dropout_ratio < 0 || dropout_ratio > 0.9)
        throw Error("TrainConfig: dropout_ratio outside [0, 0.9]");
    if (batch_size < 1 || epochs < 0 || negatives_per_positive < 1 || patience < 1)
        throw Error("TrainConfig: batch_size, negatives_per_positive, patience must be >= 1");
}

void AdamState::init(const std::vector<std::pair<std::string, TensorPtr>>& reg) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& [name, t] : reg) {
        m.emplace_back(t->size(), 0.0);
        v.emplace_back(t->size(), 0.0);
    }
}

TensorPtr bpr_loss(Tape& tape, const TensorPtr& pos_scores, const TensorPtr& neg_scores) {
    if (pos_scores->size() == 0) throw Error("bpr_loss: empty batch");
    if (pos_scores->shape != neg_scores->shape)
        throw Error("bpr_loss: score lists differ in shape");
    // -ln sigma(x) = softplus(-x)
    return mean_all(tape, softplus(tape, sub(tape, neg_scores, pos_scores)));
}

TensorPtr tpp_nll(Tape& tape, const TensorPtr& lambdas, const std::vector<double>& intervals) {
    const int n = lambdas->rows();
    if (n < 1) throw Error("tpp_nll: no events");
    if (static_cast<int>(intervals.size()) != n - 1)
        throw Error("tpp_nll: expected " + std::to_string(n - 1) + " intervals, got " +
                    std::to_string(intervals.size()));
    for (double v : lambdas->values)
        if (v <= 0.0) throw Error("tpp_nll: non-positive intensity " + std::to_string(v));
    for (double dt : intervals)
        if (dt < 0.0) throw Error("tpp_nll: negative interval");
    auto nll = affine(tape, sum_all(tape, log_(tape, lambdas)), -1.0, 0.0);
    if (n > 1) {
        auto left = slice_rows(tape, lambdas, 0, n - 1);
        auto right = slice_rows(tape, lambdas, 1, n - 1);
        auto w = make_tensor({n - 1, 1}, std::vector<double>(intervals.begin(), intervals.end()));
        auto trap = affine(tape, sum_all(tape, mul(tape, w, add(tape, left, right))), 0.5, 0.0);
        nll = add(tape, nll, trap);
    }
    return nll;
}

TensorPtr regularizer(Tape& tape, const ModelParams& params, bool squared) {
    TensorPtr total;
    for (const auto& [name, t] : params.registry()) {
        TensorPtr p = t;
        if (name == "embed.item_table")
            p = slice_rows(tape, t, 0, params.num_items); // padding row excluded
        auto sq = sum_all(tape, mul(tape, p, p));
        total = total ? add(tape, total, sq) : sq;
    }
    return squared ? total : sqrt_(tape, total);
}

TensorPtr joint_loss(Tape& tape, const TensorPtr& bpr, const TensorPtr& tpp,
                     const ModelParams& params, double gamma, bool squared) {
    auto loss = bpr;
    if (tpp) loss = add(tape, loss, tpp);
    if (gamma != 0.0)
        loss = add(tape, loss, affine(tape, regularizer(tape, params, squared), gamma, 0.0));
    return loss;
}

void adam_step(const std::vector<std::pair<std::string, TensorPtr>>& reg,
               AdamState& state, double lr) {
    if (state.m.size() != reg.size()) throw Error("adam_step: state not initialized");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < reg.size(); ++p) {
        auto& t = reg[p].second;
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double g = t->grad[i];
            if (!std::isfinite(g))
                throw Error("adam_step: non-finite gradient in " + reg[p].first);
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t->values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

ModelParams deep_copy(const ModelParams& params) {
    ModelParams out = params;
    auto clone = [](const TensorPtr& t) { return make_tensor(t->shape, t->values, true); };
    out.user_table = clone(params.user_table);
    out.item_table = clone(params.item_table);
    out.graph.W_U = clone(params.graph.W_U);
    out.graph.b_U = clone(params.graph.b_U);
    out.graph.v_u = clone(params.graph.v_u);
    out.graph.W_I = clone(params.graph.W_I);
    out.graph.b_I = clone(params.graph.b_I);
    out.graph.v_i = clone(params.graph.v_i);
    out.graph.order_weights = clone(params.graph.order_weights);
    out.mutual.W_Q = clone(params.mutual.W_Q);
    out.mutual.W_K = clone(params.mutual.W_K);
    out.mutual.W_V = clone(params.mutual.W_V);
    out.mutual.beta = clone(params.mutual.beta);
    out.mutual.mu = clone(params.mutual.mu);
    out.self_net.W_Q = clone(params.self_net.W_Q);
    out.self_net.W_K = clone(params.self_net.W_K);
    out.self_net.W_V = clone(params.self_net.W_V);
    out.self_net.beta = clone(params.self_net.beta);
    out.self_net.mu = clone(params.self_net.mu);
    out.self_net.w_lambda = clone(params.self_net.w_lambda);
    out.self_net.b_lambda = clone(params.self_net.b_lambda);
    out.Wg_Q = clone(params.Wg_Q);
    out.Wg_K = clone(params.Wg_K);
    out.Wg_V = clone(params.Wg_V);
    out.W_u = clone(params.W_u);
    return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    a ^= b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2);
    return a;
}

// per-row dot product of two equally shaped matrices -> [rows, 1]
TensorPtr rowwise_dot(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    auto ones = make_tensor({1, a->cols()}, std::vector<double>(a->cols(), 1.0));
    return matmul(tape, mul(tape, a, b), ones, true);
}

} // namespace

TrainResult train(const Dataset& dataset, const SocialGraph& graph,
                  const MetaPathIndex& index, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, std::ostream* log) {
    mcfg.validate();
    tcfg.validate();
    ModelParams params = init_params(mcfg, dataset.num_users, dataset.num_items);
    auto reg = params.registry();
    AdamState adam;
    adam.init(reg);

    // users with at least 2 training events: the last one is the training
    // target, the rest the input prefix
    std::vector<int> trainable;
    for (int u = 0; u < dataset.num_users; ++u)
        if (dataset.train_len(u) >= 2) trainable.push_back(u);
    if (trainable.empty()) throw Error("train: no user has enough training events");

    // full histories for negative sampling
    std::vector<std::set<int>> history(dataset.num_users);
    for (int u = 0; u < dataset.num_users; ++u)
        for (const auto& e : dataset.sequences[u]) history[u].insert(e.item);

    TrainResult result;
    result.params = deep_copy(params);
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        // friends resampled once per epoch
        std::vector<std::vector<int>> friends(dataset.num_users);
        for (int u = 0; u < dataset.num_users; ++u)
            friends[u] = sample_friends(graph, u, mcfg.M,
                                        mix(mix(tcfg.seed, epoch + 1), u));

        std::vector<int> order = trainable;
        std::mt19937_64 shuffle_rng(mix(tcfg.seed, 7919ULL * (epoch + 1)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::mt19937_64 neg_rng(mix(tcfg.seed, 104729ULL * (epoch + 1)));
        std::mt19937_64 drop_rng(mix(tcfg.seed, 1299709ULL * (epoch + 1)));
        std::uniform_int_distribution<int> item_pick(0, dataset.num_items - 1);

        double epoch_bpr = 0, epoch_tpp = 0, epoch_reg = 0;
        int batches = 0;
        bool aborted = false;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tcfg.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + tcfg.batch_size);
            Tape tape;
            auto ctx = graph_forward(tape, params, mcfg, graph, index,
                                     tcfg.dropout_ratio, &drop_rng);
            TensorPtr bpr_sum, tpp_sum;
            int count = 0;
            for (std::size_t bi = b0; bi < b1; ++bi) {
                const int u = order[bi];
                const int prefix = dataset.train_len(u) - 1;
                auto fwd = forward_user(tape, params, mcfg, ctx, dataset, u, friends[u],
                                        prefix, dataset.interval_cap_days, false,
                                        nullptr, true);
                // row i of position_heads predicts the item at position i + 1
                // of the (possibly truncated) input window
                const int l = fwd.seq_len;
                const int start = prefix - l;
                std::vector<int> targets(l);
                for (int i = 0; i < l; ++i)
                    targets[i] = dataset.sequences[u][start + i + 1].item;
                auto pos_embeds = gather_rows(tape, params.item_table, targets);
                auto pos_sc = rowwise_dot(tape, fwd.position_heads, pos_embeds);
                TensorPtr u_bpr;
                for (int n = 0; n < tcfg.negatives_per_positive; ++n) {
                    std::vector<int> negs(l);
                    for (auto& ni : negs) {
                        do ni = item_pick(neg_rng); while (history[u].count(ni));
                    }
                    auto neg_embeds = gather_rows(tape, params.item_table, negs);
                    auto neg_sc = rowwise_dot(tape, fwd.position_heads, neg_embeds);
                    auto term = bpr_loss(tape, pos_sc, neg_sc);
                    u_bpr = u_bpr ? add(tape, u_bpr, term) : term;
                }
                u_bpr = affine(tape, u_bpr, 1.0 / tcfg.negatives_per_positive, 0.0);
                bpr_sum = bpr_sum ? add(tape, bpr_sum, u_bpr) : u_bpr;
                if (!mcfg.no_TC) {
                    std::vector<double> intervals;
                    for (std::size_t i = 1; i < fwd.times.size(); ++i)
                        intervals.push_back(fwd.times[i] - fwd.times[i - 1]);
                    auto u_tpp = tpp_nll(tape, fwd.lambdas, intervals);
                    // per-event scale so sequence length does not set the
                    // balance against the pairwise ranking term
                    u_tpp = affine(tape, u_tpp, 1.0 / fwd.seq_len, 0.0);
                    tpp_sum = tpp_sum ? add(tape, tpp_sum, u_tpp) : u_tpp;
                }
                ++count;
            }
            auto bpr_mean = affine(tape, bpr_sum, 1.0 / count, 0.0);
            TensorPtr tpp_mean;
            if (tpp_sum) tpp_mean = affine(tape, tpp_sum, 1.0 / count, 0.0);
            auto loss = joint_loss(tape, bpr_mean, tpp_mean, params, tcfg.gamma,
                                   mcfg.squared_reg);
            if (!std::isfinite(loss->scalar())) {
                aborted = true;
                break;
            }
            for (auto& [name, t] : reg) t->zero_grad();
            tape.backward(loss);
            adam_step(reg, adam, tcfg.learning_rate);

            epoch_bpr += bpr_mean->scalar();
            if (tpp_mean) epoch_tpp += tpp_mean->scalar();
            if (tcfg.gamma != 0.0) {
                Tape rt;
                epoch_reg = regularizer(rt, params, mcfg.squared_reg)->scalar();
            }
            ++batches;
        }
        if (aborted) {
            result.diverged = true;
            if (log) *log << "epoch " << epoch << " diverged (non-finite loss); "
                          << "keeping checkpoint from epoch " << result.best_epoch << "\n";
            break;
        }

        auto val = evaluate_model(params, mcfg, dataset, graph, index,
                                  EvalMode::Validation, {10});
        const double recall10 = val.at_k.at(10).recall;
        const auto t1 = std::chrono::steady_clock::now();

        EpochLog lg;
        lg.epoch = epoch;
        lg.bpr = batches ? epoch_bpr / batches : 0.0;
        lg.tpp = batches ? epoch_tpp / batches : 0.0;
        lg.reg = epoch_reg;
        lg.val_recall10 = recall10;
        lg.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.history.push_back(lg);
        if (log)
            *log << "epoch=" << lg.epoch << " bpr=" << lg.bpr << " tpp=" << lg.tpp
                 << " reg=" << lg.reg << " val_recall10=" << lg.val_recall10
                 << " seconds=" << lg.seconds << "\n";

        if (result.best_epoch < 0 || recall10 > result.best_val_recall10) {
            result.best_val_recall10 = recall10;
            result.best_epoch = epoch;
            result.params = deep_copy(params);
            epochs_since_best = 0;
        } else if (++epochs_since_best >= tcfg.patience) {
            break;
        }
    }
    if (result.best_epoch < 0) result.params = deep_copy(params);
    result.final_params = deep_copy(params);
    return result;
}

} // namespace sten

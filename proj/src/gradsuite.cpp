#include "sten/gradsuite.hpp"

#include "sten/training.hpp"

#include <random>

namespace sten {

ToyInstance make_toy_instance() {
    const double day = 86400.0;
    std::vector<EventRecord> events = {
        {0, 0, 0.5 * day}, {0, 1, 1.2 * day}, {0, 2, 2.0 * day},
        {0, 3, 3.3 * day}, {0, 1, 4.1 * day},
        {1, 1, 0.7 * day}, {1, 2, 1.5 * day}, {1, 4, 2.6 * day},
        {1, 0, 3.0 * day}, {1, 5, 4.4 * day},
        {2, 2, 0.3 * day}, {2, 3, 1.1 * day}, {2, 5, 2.2 * day},
        {2, 4, 3.8 * day}, {2, 2, 4.9 * day},
        {3, 0, 0.9 * day}, {3, 5, 1.8 * day}, {3, 3, 2.4 * day},
        {3, 4, 3.6 * day}, {3, 1, 4.7 * day},
    };
    ToyInstance toy;
    toy.dataset = build_dataset(events, 1, 1);
    toy.graph = social_from_edges({{0, 1}, {1, 2}, {2, 3}, {0, 2}}, toy.dataset);
    toy.index = build_metapath_neighbors(toy.graph, 2, 50, 7);
    return toy;
}

namespace {

// Registry-ordered mutable slots so a single parameter can be swapped for the
// finite-difference probe.
std::vector<TensorPtr*> param_slots(ModelParams& p) {
    return {
        &p.user_table, &p.item_table,
        &p.graph.W_U, &p.graph.b_U, &p.graph.v_u,
        &p.graph.W_I, &p.graph.b_I, &p.graph.v_i, &p.graph.order_weights,
        &p.mutual.W_Q, &p.mutual.W_K, &p.mutual.W_V, &p.mutual.beta, &p.mutual.mu,
        &p.self_net.W_Q, &p.self_net.W_K, &p.self_net.W_V,
        &p.self_net.beta, &p.self_net.mu,
        &p.self_net.w_lambda, &p.self_net.b_lambda,
        &p.Wg_Q, &p.Wg_K, &p.Wg_V,
        &p.W_u,
    };
}

std::string module_of(const std::string& name) {
    return name.substr(0, name.find('.'));
}

TensorPtr suite_loss(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                     const ToyInstance& toy) {
    const auto& ds = toy.dataset;
    auto ctx = graph_forward(tape, params, cfg, toy.graph, toy.index);
    TensorPtr pos, neg, tpp_total;
    int n_users = 0, n_tpp = 0;
    for (int u = 0; u < ds.num_users; ++u) {
        if (ds.train_len(u) < 2) continue;
        const int prefix = ds.train_len(u) - 1;
        const int target = ds.sequences[u][prefix].item;
        auto friends = sample_friends(toy.graph, u, cfg.M, cfg.seed * 977 + u);
        auto fwd = forward_user(tape, params, cfg, ctx, ds, u, friends, prefix,
                                ds.interval_cap_days, false);
        const int neg_item = (target + 1) % ds.num_items;
        auto pos_emb = gather_rows(tape, params.item_table, {target});
        auto neg_emb = gather_rows(tape, params.item_table, {neg_item});
        auto ps = matmul(tape, fwd.h_hybrid, pos_emb, true);
        auto ns = matmul(tape, fwd.h_hybrid, neg_emb, true);
        pos = pos ? concat_rows(tape, pos, ps) : ps;
        neg = neg ? concat_rows(tape, neg, ns) : ns;
        ++n_users;
        if (fwd.lambdas && fwd.seq_len >= 2) {
            std::vector<double> intervals;
            for (int i = 1; i < fwd.seq_len; ++i)
                intervals.push_back(fwd.times[i] - fwd.times[i - 1]);
            auto nll = tpp_nll(tape, fwd.lambdas, intervals);
            tpp_total = tpp_total ? add(tape, tpp_total, nll) : nll;
            ++n_tpp;
        }
    }
    if (!pos) throw Error("run_grad_suite: toy instance has no trainable users");
    auto bpr = bpr_loss(tape, pos, neg);
    TensorPtr tpp;
    if (tpp_total) tpp = affine(tape, tpp_total, 1.0 / n_tpp, 0.0);
    return joint_loss(tape, bpr, tpp, params, 0.01, cfg.squared_reg);
}

} // namespace

std::vector<std::pair<std::string, double>> run_grad_suite(const ModelConfig& cfg,
                                                           double eps) {
    auto toy = make_toy_instance();
    auto params = init_params(cfg, toy.dataset.num_users, toy.dataset.num_items);

    // Spread parameters away from the tiny init so the check exercises the
    // nonlinearities at non-degenerate points.
    std::mt19937_64 rng(cfg.seed * 131 + 5);
    std::uniform_real_distribution<double> unif(-0.4, 0.4);
    for (auto& [name, t] : params.registry())
        if (name != "graph.order_weights")
            for (auto& v : t->values) v = unif(rng);
    params.mutual.beta->values[0] = 0.07;
    params.mutual.mu->values[0] = -0.05;
    params.self_net.beta->values[0] = -0.06;
    params.self_net.mu->values[0] = 0.04;

    auto reg = params.registry();
    std::vector<std::pair<std::string, double>> report;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        auto f = [&, i](Tape& tape, const TensorPtr& x) {
            ModelParams probe = params; // shared tensors except the slot under test
            *param_slots(probe)[i] = x;
            return suite_loss(tape, probe, cfg, toy);
        };
        const double err = grad_check(f, reg[i].second, eps);
        const std::string mod = module_of(reg[i].first);
        bool found = false;
        for (auto& [m, e] : report)
            if (m == mod) {
                e = std::max(e, err);
                found = true;
            }
        if (!found) report.emplace_back(mod, err);
    }
    return report;
}

} // namespace sten

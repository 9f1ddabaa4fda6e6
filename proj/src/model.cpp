#include "sten/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace sten {

void ModelConfig::validate() const {
    if (d < 1 || M < 1 || l_m < 1 || l_max < 1 || max_order < 1 || metapath_cap < 1)
        throw Error("ModelConfig: d, M, l_m, l_max, max_order, metapath_cap must be >= 1");
}

std::vector<std::pair<std::string, TensorPtr>> ModelParams::registry() const {
    return {
        {"embed.user_table", user_table},
        {"embed.item_table", item_table},
        {"graph.W_U", graph.W_U},
        {"graph.b_U", graph.b_U},
        {"graph.v_u", graph.v_u},
        {"graph.W_I", graph.W_I},
        {"graph.b_I", graph.b_I},
        {"graph.v_i", graph.v_i},
        {"graph.order_weights", graph.order_weights},
        {"mutual.W_Q", mutual.W_Q},
        {"mutual.W_K", mutual.W_K},
        {"mutual.W_V", mutual.W_V},
        {"mutual.beta", mutual.beta},
        {"mutual.mu", mutual.mu},
        {"self.W_Q", self_net.W_Q},
        {"self.W_K", self_net.W_K},
        {"self.W_V", self_net.W_V},
        {"self.beta", self_net.beta},
        {"self.mu", self_net.mu},
        {"self.w_lambda", self_net.w_lambda},
        {"self.b_lambda", self_net.b_lambda},
        {"general.W_Q", Wg_Q},
        {"general.W_K", Wg_K},
        {"general.W_V", Wg_V},
        {"fusion.W_u", W_u},
    };
}

long ModelParams::param_count() const {
    long n = 0;
    for (const auto& [name, t] : registry()) n += static_cast<long>(t->size());
    return n;
}

long expected_param_count(const ModelConfig& cfg, int num_users, int num_items) {
    const long d = cfg.d;
    long n = 0;
    n += static_cast<long>(num_users) * d;       // user table
    n += static_cast<long>(num_items + 1) * d;   // item table incl. padding row
    n += 2 * (d * d + d + 2 * d);                // graph W/b/v for users and items
    n += cfg.max_order;                          // order weights
    n += 3 * d * d + 2;                          // mutual Q/K/V + beta/mu
    n += 3 * d * d + 2 + d + 1;                  // self Q/K/V + beta/mu + readout
    n += 3 * d * d;                              // general attention
    n += d * 2 * d;                              // fusion
    return n;
}

ModelParams init_params(const ModelConfig& cfg, int num_users, int num_items) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 0.01);
    auto weight = [&](std::vector<int> shape) {
        auto t = make_tensor(std::move(shape), true);
        for (auto& v : t->values) v = gauss(rng);
        return t;
    };
    auto zero = [&](std::vector<int> shape) { return make_tensor(std::move(shape), true); };

    ModelParams p;
    p.num_users = num_users;
    p.num_items = num_items;
    const int d = cfg.d;
    p.user_table = weight({num_users, d});
    p.item_table = weight({num_items + 1, d});
    p.graph.W_U = weight({d, d});
    p.graph.b_U = zero({d});
    p.graph.v_u = weight({2, d});
    p.graph.W_I = weight({d, d});
    p.graph.b_I = zero({d});
    p.graph.v_i = weight({2, d});
    p.graph.order_weights = make_tensor({cfg.max_order},
                                        std::vector<double>(cfg.max_order, 1.0), true);
    p.mutual.W_Q = weight({d, d});
    p.mutual.W_K = weight({d, d});
    p.mutual.W_V = weight({d, d});
    p.mutual.beta = zero({1});
    p.mutual.mu = zero({1});
    p.self_net.W_Q = weight({d, d});
    p.self_net.W_K = weight({d, d});
    p.self_net.W_V = weight({d, d});
    p.self_net.beta = zero({1});
    p.self_net.mu = zero({1});
    p.self_net.w_lambda = weight({1, d});
    p.self_net.b_lambda = zero({1});
    p.Wg_Q = weight({d, d});
    p.Wg_K = weight({d, d});
    p.Wg_V = weight({d, d});
    p.W_u = weight({d, 2 * d});
    return p;
}

// ---- checkpoint -----------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'T', 'E', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
void put_str(std::ofstream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::ifstream& in) {
    auto n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}
} // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(cfg.d));
    put_u32(out, static_cast<std::uint32_t>(cfg.M));
    put_u32(out, static_cast<std::uint32_t>(cfg.l_m));
    put_u32(out, static_cast<std::uint32_t>(cfg.l_max));
    put_u32(out, static_cast<std::uint32_t>(cfg.max_order));
    put_u32(out, static_cast<std::uint32_t>(cfg.metapath_cap));
    std::uint32_t flags = (cfg.no_GE << 0) | (cfg.no_MT << 1) | (cfg.no_ST << 2) |
                          (cfg.no_TC << 3) | (cfg.log_dt << 4) | (cfg.squared_reg << 5);
    put_u32(out, flags);
    put_u64(out, cfg.seed);
    put_u32(out, static_cast<std::uint32_t>(params.num_users));
    put_u32(out, static_cast<std::uint32_t>(params.num_items));
    auto reg = params.registry();
    put_u32(out, static_cast<std::uint32_t>(reg.size()));
    for (const auto& [name, t] : reg) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (int dim : t->shape) put_u32(out, static_cast<std::uint32_t>(dim));
        out.write(reinterpret_cast<const char*>(t->values.data()),
                  static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path, ModelConfig* cfg_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: checkpoint not found: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error("load_checkpoint: bad magic in " + path);
    if (get_u32(in) != kVersion) throw Error("load_checkpoint: unsupported version");
    ModelConfig cfg;
    cfg.d = static_cast<int>(get_u32(in));
    cfg.M = static_cast<int>(get_u32(in));
    cfg.l_m = static_cast<int>(get_u32(in));
    cfg.l_max = static_cast<int>(get_u32(in));
    cfg.max_order = static_cast<int>(get_u32(in));
    cfg.metapath_cap = static_cast<int>(get_u32(in));
    const std::uint32_t flags = get_u32(in);
    cfg.no_GE = flags & 1;
    cfg.no_MT = flags & 2;
    cfg.no_ST = flags & 4;
    cfg.no_TC = flags & 8;
    cfg.log_dt = flags & 16;
    cfg.squared_reg = flags & 32;
    cfg.seed = get_u64(in);
    const int num_users = static_cast<int>(get_u32(in));
    const int num_items = static_cast<int>(get_u32(in));
    ModelParams params = init_params(cfg, num_users, num_items);
    auto reg = params.registry();
    const auto count = get_u32(in);
    if (count != reg.size()) throw Error("load_checkpoint: parameter count mismatch");
    for (auto& [name, t] : reg) {
        const std::string got = get_str(in);
        if (got != name)
            throw Error("load_checkpoint: expected parameter " + name + ", found " + got);
        const auto ndim = get_u32(in);
        std::vector<int> shape(ndim);
        for (auto& dd : shape) dd = static_cast<int>(get_u32(in));
        if (shape != t->shape) throw Error("load_checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(t->values.data()),
                static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!in) throw Error("load_checkpoint: truncated file " + path);
    if (cfg_out) *cfg_out = cfg;
    return params;
}

// ---- prediction head ------------------------------------------------------

TensorPtr general_interest(Tape& tape, const TensorPtr& h_n, const TensorPtr& item_seq,
                           const TensorPtr& Wq, const TensorPtr& Wk, const TensorPtr& Wv,
                           TensorPtr* attention_out) {
    const int l = item_seq->rows();
    if (l < 1) throw Error("general_interest: empty item sequence");
    const int d = item_seq->cols();
    auto Q = matmul(tape, h_n, Wq, true);
    auto K = matmul(tape, item_seq, Wk, true);
    auto V = matmul(tape, item_seq, Wv, true);
    auto logits = affine(tape, matmul(tape, Q, K, true), 1.0 / std::sqrt(static_cast<double>(d)), 0.0);
    Mask all(1, l);
    for (int j = 0; j < l; ++j) all.set(0, j, true);
    auto A = masked_softmax(tape, logits, all);
    if (attention_out) *attention_out = A;
    return matmul(tape, A, V);
}

TensorPtr fuse(Tape& tape, const TensorPtr& h_s, const TensorPtr& h_g,
               const TensorPtr& W_u) {
    return matmul(tape, concat_cols(tape, h_s, h_g), W_u, true);
}

TensorPtr score_items(Tape& tape, const TensorPtr& h_hybrid, const TensorPtr& item_table,
                      int num_items, bool probabilities) {
    auto real = slice_rows(tape, item_table, 0, num_items);
    auto logits = matmul(tape, h_hybrid, real, true);
    if (!probabilities) return logits;
    Mask all(1, num_items);
    for (int j = 0; j < num_items; ++j) all.set(0, j, true);
    return masked_softmax(tape, logits, all);
}

// ---- full forward ---------------------------------------------------------

ForwardContext graph_forward(Tape& tape, const ModelParams& params,
                             const ModelConfig& cfg, const SocialGraph& graph,
                             const MetaPathIndex& index, double dropout_ratio,
                             std::mt19937_64* dropout_rng) {
    ForwardContext ctx;
    if (cfg.no_GE) {
        ctx.hU = params.user_table;
        ctx.hI = params.item_table;
        return ctx;
    }
    ctx.hU = user_aggregate(tape, params.user_table, params.graph, graph,
                            &ctx.user_attention);
    ctx.hI = item_aggregate(tape, params.item_table, params.graph, index);
    if (dropout_ratio > 0.0 && dropout_rng) {
        ctx.hU = dropout(tape, ctx.hU, dropout_ratio, *dropout_rng);
        ctx.hI = dropout(tape, ctx.hI, dropout_ratio, *dropout_rng);
    }
    return ctx;
}

UserForward forward_user(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                         const ForwardContext& ctx, const Dataset& dataset, int user,
                         const std::vector<int>& friends, int prefix_len,
                         double interval_cap, bool want_logits,
                         AttentionCapture* capture, bool want_position_heads) {
    if (prefix_len < 1 || prefix_len > static_cast<int>(dataset.sequences[user].size()))
        throw Error("forward_user: invalid prefix length " + std::to_string(prefix_len));
    const auto& seq = dataset.sequences[user];
    const int start = std::max(0, prefix_len - cfg.l_max);
    std::vector<int> items;
    std::vector<double> times;
    for (int i = start; i < prefix_len; ++i) {
        items.push_back(seq[i].item);
        times.push_back(seq[i].time);
    }
    const int l = static_cast<int>(items.size());

    TemporalOptions topt;
    topt.use_temporal = !cfg.no_TC;
    topt.interval_cap = interval_cap;
    topt.log_scale = cfg.log_dt;

    auto target_embeds = gather_rows(tape, ctx.hI, items);

    // mutually exciting network over friends' windows
    TensorPtr T_m;
    if (cfg.no_MT) {
        T_m = target_embeds;
    } else {
        auto w = window_friend_events(dataset, friends, cfg.l_m, times.back());
        auto friend_embeds = gather_rows(tape, ctx.hI, w.items);
        auto mres = mutual_excite(tape, target_embeds, times, friend_embeds, w.times,
                                  w.is_pad, params.mutual, topt);
        T_m = mres.T_m;
        if (capture) {
            capture->mutual = mres.attention;
            capture->mutual_d_F = mres.d_F;
            capture->friend_items = w.items;
            capture->friend_times = w.times;
            capture->friend_pad = w.is_pad;
        }
    }

    // self-exciting network (or mean pooling under w/o ST)
    UserForward out;
    out.seq_len = l;
    out.times = times;
    TensorPtr h_s;
    TensorPtr intensity_src;
    if (cfg.no_ST) {
        h_s = mean_rows(tape, T_m);
        intensity_src = T_m;
    } else {
        auto sres = self_excite(tape, T_m, times, params.self_net, topt);
        h_s = sres.h_s;
        intensity_src = sres.T_S;
        if (capture) {
            capture->self_temporal = sres.attention;
            TemporalOptions plain = topt;
            plain.use_temporal = false;
            auto pres = self_excite(tape, T_m, times, params.self_net, plain);
            capture->self_plain = pres.attention;
        }
    }
    if (!cfg.no_TC) out.lambdas = scalar_intensity(tape, intensity_src, params.self_net);

    // general interests from the full input prefix
    auto h_n = gather_rows(tape, ctx.hU, {user});
    auto h_g = general_interest(tape, h_n, target_embeds, params.Wg_Q, params.Wg_K,
                                params.Wg_V);
    out.h_hybrid = fuse(tape, h_s, h_g, params.W_u);
    if (want_logits)
        out.logits = score_items(tape, out.h_hybrid, params.item_table, params.num_items);

    if (want_position_heads) {
        // one hybrid row per position: the same general-interest query with a
        // causal mask over the item prefix, paired with the matching
        // sequential representation row
        auto Q = matmul(tape, h_n, params.Wg_Q, true);
        auto K = matmul(tape, target_embeds, params.Wg_K, true);
        auto V = matmul(tape, target_embeds, params.Wg_V, true);
        auto logits1 = affine(tape, matmul(tape, Q, K, true),
                              1.0 / std::sqrt(static_cast<double>(target_embeds->cols())),
                              0.0);
        auto logits_all = gather_rows(tape, logits1, std::vector<int>(l, 0));
        Mask causal(l, l);
        for (int i = 0; i < l; ++i)
            for (int j = 0; j <= i; ++j) causal.set(i, j, true);
        auto A = masked_softmax(tape, logits_all, causal);
        auto h_g_rows = matmul(tape, A, V);

        TensorPtr h_s_rows;
        if (cfg.no_ST) {
            // causal running mean, matching the pooled h_s at the last row
            auto C = make_tensor({l, l});
            for (int i = 0; i < l; ++i)
                for (int j = 0; j <= i; ++j) C->at(i, j) = 1.0 / (i + 1);
            h_s_rows = matmul(tape, C, T_m);
        } else {
            h_s_rows = intensity_src;
        }
        out.position_heads = fuse(tape, h_s_rows, h_g_rows, params.W_u);
    }
    if (capture) {
        capture->target_items = items;
        capture->target_times = times;
    }
    return out;
}

} // namespace sten

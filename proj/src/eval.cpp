#include "sten/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace sten {

RankingResult rank_ground_truth(const std::vector<double>& scores, int ground_truth,
                                const std::vector<int>& exclude) {
    std::set<int> excl(exclude.begin(), exclude.end());
    if (excl.count(ground_truth))
        throw Error("rank_ground_truth: ground truth item is excluded");
    if (ground_truth < 0 || ground_truth >= static_cast<int>(scores.size()))
        throw Error("rank_ground_truth: ground truth outside catalog");
    const double gt_score = scores[ground_truth];
    RankingResult r;
    r.ground_truth_item = ground_truth;
    int higher = 0, tied_before = 0, candidates = 0;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
        if (excl.count(i)) continue;
        ++candidates;
        if (i == ground_truth) continue;
        if (scores[i] > gt_score) ++higher;
        else if (scores[i] == gt_score && i < ground_truth) ++tied_before;
    }
    r.rank = 1 + higher + tied_before;
    r.candidate_count = candidates;
    return r;
}

MetricsEntry metrics_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) throw Error("metrics_at_k: empty result set");
    if (k < 1) throw Error("metrics_at_k: k must be >= 1");
    MetricsEntry e;
    for (const auto& r : results) {
        if (r.rank <= k) {
            e.recall += 1.0;
            e.ndcg += 1.0 / std::log2(1.0 + r.rank);
            e.mrr += 1.0 / r.rank;
        }
    }
    const double n = static_cast<double>(results.size());
    e.recall /= n;
    e.ndcg /= n;
    e.mrr /= n;
    return e;
}

MetricsReport make_report(const std::vector<RankingResult>& results,
                          const std::vector<int>& ks, const std::string& config_echo) {
    MetricsReport rep;
    rep.user_count = static_cast<int>(results.size());
    rep.config_echo = config_echo;
    for (int k : ks) rep.at_k[k] = metrics_at_k(results, k);
    return rep;
}

std::string MetricsReport::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "metrics_report 1\n";
    os << "users " << user_count << "\n";
    os << "config " << config_echo << "\n";
    os << "timestamp " << timestamp << "\n";
    for (const auto& [k, e] : at_k) {
        os << "{metric=recall, k=" << k << ", value=" << e.recall << "}\n";
        os << "{metric=ndcg, k=" << k << ", value=" << e.ndcg << "}\n";
        os << "{metric=mrr, k=" << k << ", value=" << e.mrr << "}\n";
    }
    return os.str();
}

MetricsReport MetricsReport::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "metrics_report 1")
        throw Error("MetricsReport::parse: unrecognized header");
    MetricsReport rep;
    while (std::getline(in, line)) {
        if (line.rfind("users ", 0) == 0) {
            rep.user_count = std::stoi(line.substr(6));
        } else if (line.rfind("config ", 0) == 0) {
            rep.config_echo = line.substr(7);
        } else if (line.rfind("timestamp ", 0) == 0) {
            rep.timestamp = line.substr(10);
        } else if (line.rfind("{metric=", 0) == 0) {
            char buf[16] = {0};
            int k = 0;
            double value = 0.0;
            if (std::sscanf(line.c_str(), "{metric=%15[a-z], k=%d, value=%lf}", buf, &k,
                            &value) != 3)
                throw Error("MetricsReport::parse: bad metric line: " + line);
            const std::string metric = buf;
            auto& e = rep.at_k[k];
            if (metric == "recall") e.recall = value;
            else if (metric == "ndcg") e.ndcg = value;
            else if (metric == "mrr") e.mrr = value;
        }
    }
    return rep;
}

MetricsReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                             const Dataset& dataset, const SocialGraph& graph,
                             const MetaPathIndex& index, EvalMode mode,
                             const std::vector<int>& ks) {
    std::vector<RankingResult> results;
    Tape tape; // evaluation is one long read-only pass, no dropout
    auto ctx = graph_forward(tape, params, cfg, graph, index);
    for (int u = 0; u < dataset.num_users; ++u) {
        int prefix, target_pos;
        switch (mode) {
            case EvalMode::Validation:
                prefix = dataset.train_len(u);
                target_pos = dataset.val_index(u);
                break;
            case EvalMode::Test:
                prefix = dataset.train_len(u) + 1;
                target_pos = dataset.test_index(u);
                break;
            case EvalMode::TrainNextItem:
                prefix = dataset.train_len(u) - 1;
                target_pos = dataset.train_len(u) - 1;
                break;
        }
        if (prefix < 1) continue;
        const int target = dataset.sequences[u][target_pos].item;
        // eval-time friend sample: fixed salt, independent of epoch
        auto friends = sample_friends(graph, u, cfg.M, cfg.seed * 31 + u);
        auto fwd = forward_user(tape, params, cfg, ctx, dataset, u, friends, prefix,
                                dataset.interval_cap_days, true);
        std::set<int> excl;
        for (int i = 0; i < prefix; ++i) excl.insert(dataset.sequences[u][i].item);
        excl.erase(target);
        auto r = rank_ground_truth(fwd.logits->values, target,
                                   {excl.begin(), excl.end()});
        r.user_id = u;
        results.push_back(r);
    }
    std::ostringstream echo;
    echo << "d=" << cfg.d << " M=" << cfg.M << " l_m=" << cfg.l_m
         << " l_max=" << cfg.l_max << " max_order=" << cfg.max_order
         << " seed=" << cfg.seed;
    auto rep = make_report(results, ks, echo.str());
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
    rep.timestamp = buf;
    return rep;
}

std::string AblationReport::table() const {
    std::ostringstream os;
    os << "variant    R@10     N@10\n";
    for (const auto& r : rows) {
        os << r.name;
        for (std::size_t i = r.name.size(); i < 11; ++i) os << ' ';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.4f   %.4f\n", r.recall10, r.ndcg10);
        os << buf;
    }
    return os.str();
}

std::string AblationReport::serialize() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& r : rows)
        os << "{variant=" << r.name << ", recall10=" << r.recall10
           << ", ndcg10=" << r.ndcg10 << "}\n";
    return os.str();
}

AblationReport run_ablation_suite(const Dataset& dataset, const SocialGraph& graph,
                                  const MetaPathIndex& index, const ModelConfig& base,
                                  const TrainConfig& tcfg, std::ostream* log) {
    struct Variant {
        const char* name;
        void (*apply)(ModelConfig&);
    };
    const Variant variants[] = {
        {"w/o GE", [](ModelConfig& c) { c.no_GE = true; }},
        {"w/o MT", [](ModelConfig& c) { c.no_MT = true; }},
        {"w/o ST", [](ModelConfig& c) { c.no_ST = true; }},
        {"w/o TC", [](ModelConfig& c) { c.no_TC = true; }},
        {"Default", [](ModelConfig&) {}},
    };
    AblationReport rep;
    for (const auto& v : variants) {
        ModelConfig cfg = base;
        v.apply(cfg);
        auto trained = train(dataset, graph, index, cfg, tcfg, log);
        auto m = evaluate_model(trained.params, cfg, dataset, graph, index,
                                EvalMode::Test, {10});
        rep.rows.push_back({v.name, m.at_k.at(10).recall, m.at_k.at(10).ndcg});
        if (log) *log << v.name << ": R@10=" << m.at_k.at(10).recall
                      << " N@10=" << m.at_k.at(10).ndcg << "\n";
    }
    return rep;
}

namespace {

void write_matrix(std::ostream& out, const std::string& name, const TensorPtr& t,
                  int cols_limit = -1) {
    const int r = t->rows();
    const int c = cols_limit < 0 ? t->cols() : cols_limit;
    out << name << " " << r << " " << c << "\n";
    out.precision(17);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out << (j ? " " : "") << t->at(i, j);
        out << "\n";
    }
}

} // namespace

void export_attention(const ModelParams& params, const ModelConfig& cfg,
                      const Dataset& dataset, const SocialGraph& graph,
                      const MetaPathIndex& index, int user, const std::string& path) {
    if (user < 0 || user >= dataset.num_users)
        throw Error("export_attention: unknown user " + std::to_string(user));
    Tape tape;
    auto ctx = graph_forward(tape, params, cfg, graph, index);
    auto friends = sample_friends(graph, user, cfg.M, cfg.seed * 31 + user);
    AttentionCapture cap;
    const int prefix = dataset.train_len(user) + 1;
    forward_user(tape, params, cfg, ctx, dataset, user, friends, prefix,
                 dataset.interval_cap_days, false, &cap);

    std::ofstream out(path);
    if (!out) throw Error("export_attention: cannot open " + path);
    out << "sten_attention 1\n";
    out << "user " << user << "\n";
    out << "events";
    for (std::size_t i = 0; i < cap.target_items.size(); ++i)
        out << " " << cap.target_items[i] << ":" << cap.target_times[i];
    out << "\n";
    out << "friend_events";
    for (std::size_t i = 0; i < cap.friend_items.size(); ++i)
        out << " " << cap.friend_items[i] << ":" << cap.friend_times[i]
            << (cap.friend_pad[i] ? ":pad" : "");
    out << "\n";

    // H1: this user's graph attention row over all users
    if (ctx.user_attention) {
        Tape t2;
        auto row = gather_rows(t2, ctx.user_attention, {user});
        write_matrix(out, "H1", row);
    } else {
        out << "H1 0 0\n"; // no graph layer under w/o GE
    }
    // H2: mutual attention, one row per target event; the first d_F columns
    // cover friend events (future cells are exact zeros), the trailing
    // columns are the own-embedding fallback slots
    if (cap.mutual) {
        out << "H2_friend_columns " << cap.mutual_d_F << "\n";
        write_matrix(out, "H2", cap.mutual);
    } else {
        out << "H2 0 0\n";
    }
    if (cap.self_temporal) write_matrix(out, "H3", cap.self_temporal);
    else out << "H3 0 0\n";
    if (cap.self_plain) write_matrix(out, "H4", cap.self_plain);
    else out << "H4 0 0\n";
}

} // namespace sten

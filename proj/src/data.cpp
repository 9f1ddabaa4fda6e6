#include "sten/data.hpp"

#include "sten/tensor.hpp" // Error

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace sten {

namespace {
constexpr double kSecondsPerDay = 86400.0;
}

ParseResult parse_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("parse_events: cannot open " + path);
    ParseResult res;
    std::string line;
    int line_no = 0, first_bad = 0, total = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        ++total;
        std::istringstream ls(line);
        EventRecord r;
        char tab1 = 0, tab2 = 0;
        if ((ls >> r.user_id >> std::noskipws >> tab1 >> std::skipws >> r.item_id
                >> std::noskipws >> tab2 >> std::skipws >> r.timestamp) &&
            tab1 == '\t' && tab2 == '\t' && r.user_id >= 0 && r.item_id >= 0 &&
            std::isfinite(r.timestamp) && r.timestamp >= 0) {
            res.records.push_back(r);
        } else {
            if (res.malformed == 0) first_bad = line_no;
            ++res.malformed;
        }
    }
    if (total == 0) {
        std::cerr << "warning: " << path << " contains no event records\n";
    }
    if (total > 0 && res.malformed * 10 > total) {
        throw Error("parse_events: " + std::to_string(res.malformed) + "/" +
                    std::to_string(total) + " malformed lines in " + path +
                    " (first at line " + std::to_string(first_bad) + ")");
    }
    return res;
}

void write_events(const std::string& path, const std::vector<EventRecord>& records,
                  const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error("write_events: cannot open " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out.precision(17);
    for (const auto& r : records)
        out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\n';
}

void Dataset::save_events(const std::string& path) const {
    std::vector<EventRecord> recs;
    for (int u = 0; u < num_users; ++u)
        for (const auto& e : sequences[u])
            recs.push_back({orig_user_ids[u], orig_item_ids[e.item],
                            e.time * kSecondsPerDay + min_timestamp_seconds});
    write_events(path, recs);
}

Dataset build_dataset(const std::vector<EventRecord>& events, int min_user_events,
                      int min_item_events) {
    if (min_user_events < 1 || min_item_events < 1)
        throw Error("build_dataset: min thresholds must be >= 1");

    // Deduplicate exact (user, item, timestamp) triples, keeping first file order.
    std::vector<EventRecord> evs;
    std::set<std::tuple<int, int, double>> seen;
    for (const auto& e : events)
        if (seen.insert({e.user_id, e.item_id, e.timestamp}).second) evs.push_back(e);

    // Iterative filtering to a fixpoint; dropping a user can push an item
    // under threshold and vice versa. A user also needs >= 3 events so the
    // leave-one-out split exists.
    const int min_user = std::max(min_user_events, 3);
    std::set<int> dead_users, dead_items;
    for (;;) {
        std::map<int, int> ucount, icount;
        for (const auto& e : evs) {
            if (dead_users.count(e.user_id) || dead_items.count(e.item_id)) continue;
            ++ucount[e.user_id];
            ++icount[e.item_id];
        }
        bool changed = false;
        for (const auto& [u, c] : ucount)
            if (c < min_user) { dead_users.insert(u); changed = true; }
        for (const auto& [i, c] : icount)
            if (c < min_item_events) { dead_items.insert(i); changed = true; }
        if (!changed) break;
    }
    std::vector<EventRecord> kept;
    for (const auto& e : evs)
        if (!dead_users.count(e.user_id) && !dead_items.count(e.item_id)) kept.push_back(e);
    if (kept.empty()) throw Error("build_dataset: no users survive filtering");

    Dataset ds;
    std::map<int, int> imap;
    std::map<int, std::vector<std::pair<double, int>>> per_user; // (time, kept index)
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& e = kept[k];
        if (!ds.user_remap.count(e.user_id)) {
            // placeholder; dense ids assigned below in sorted original order
            ds.user_remap[e.user_id] = -1;
        }
        if (!imap.count(e.item_id)) imap[e.item_id] = -1;
        per_user[e.user_id].push_back({e.timestamp, static_cast<int>(k)});
    }
    int uid = 0;
    for (auto& [orig, dense] : ds.user_remap) {
        dense = uid++;
        ds.orig_user_ids.push_back(orig);
    }
    std::sort(ds.orig_user_ids.begin(), ds.orig_user_ids.end());
    ds.user_remap.clear();
    for (std::size_t i = 0; i < ds.orig_user_ids.size(); ++i)
        ds.user_remap[ds.orig_user_ids[i]] = static_cast<int>(i);
    int iid = 0;
    for (auto& [orig, dense] : imap) {
        dense = iid++;
        ds.orig_item_ids.push_back(orig);
    }
    ds.num_users = uid;
    ds.num_items = iid;

    double min_ts = kept.front().timestamp;
    for (const auto& e : kept) min_ts = std::min(min_ts, e.timestamp);
    ds.min_timestamp_seconds = min_ts;

    ds.sequences.assign(ds.num_users, {});
    for (auto& [orig_user, lst] : per_user) {
        // stable by (time, file order)
        std::sort(lst.begin(), lst.end());
        auto& seq = ds.sequences[ds.user_remap[orig_user]];
        for (auto& [ts, k] : lst)
            seq.push_back({imap[kept[k].item_id], (ts - min_ts) / kSecondsPerDay});
    }

    // 99th percentile of consecutive intra-user intervals, used downstream to
    // clip beta*dt terms.
    std::vector<double> intervals;
    for (const auto& seq : ds.sequences)
        for (std::size_t i = 1; i < seq.size(); ++i)
            intervals.push_back(seq[i].time - seq[i - 1].time);
    if (intervals.empty()) {
        ds.interval_cap_days = 1.0;
    } else {
        std::sort(intervals.begin(), intervals.end());
        std::size_t idx = static_cast<std::size_t>(0.99 * (intervals.size() - 1));
        ds.interval_cap_days = std::max(intervals[idx], 1e-9);
    }
    return ds;
}

SocialGraph social_from_edges(const std::vector<std::pair<int, int>>& edges,
                              const Dataset& dataset) {
    SocialGraph g;
    g.user_adjacency.assign(dataset.num_users, {});
    g.user_items.assign(dataset.num_users, {});
    std::set<std::pair<int, int>> eset;
    for (auto [a, b] : edges) {
        auto ia = dataset.user_remap.find(a);
        auto ib = dataset.user_remap.find(b);
        if (ia == dataset.user_remap.end() || ib == dataset.user_remap.end()) continue;
        int u = ia->second, v = ib->second;
        if (u == v) continue;
        eset.insert({u, v});
        eset.insert({v, u});
    }
    for (auto [u, v] : eset) g.user_adjacency[u].push_back(v);
    for (auto& adj : g.user_adjacency) std::sort(adj.begin(), adj.end());
    for (int u = 0; u < dataset.num_users; ++u) {
        std::set<int> its;
        for (const auto& e : dataset.sequences[u]) its.insert(e.item);
        g.user_items[u].assign(its.begin(), its.end());
    }
    return g;
}

SocialGraph load_social(const std::string& path, const Dataset& dataset) {
    std::ifstream in(path);
    if (!in) throw Error("load_social: cannot open " + path);
    std::vector<std::pair<int, int>> edges;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int a, b;
        if (ls >> a >> b) edges.push_back({a, b});
    }
    return social_from_edges(edges, dataset);
}

void write_social(const std::string& path, const std::vector<std::pair<int, int>>& edges,
                  const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error("write_social: cannot open " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    for (auto [a, b] : edges) out << a << '\t' << b << '\n';
}

std::vector<int> sample_friends(const SocialGraph& graph, int user, int M,
                                std::uint64_t rng_seed) {
    if (M < 1) throw Error("sample_friends: M must be >= 1");
    const auto& adj = graph.user_adjacency[user];
    if (static_cast<int>(adj.size()) <= M) return adj;
    // partial Fisher-Yates, deterministic given the seed
    std::mt19937_64 rng(rng_seed);
    std::vector<int> pool = adj;
    std::vector<int> out;
    out.reserve(M);
    for (int k = 0; k < M; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
        out.push_back(pool[k]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

FriendWindows window_friend_events(const Dataset& dataset, const std::vector<int>& friends,
                                   int l_m, double cutoff_time) {
    if (l_m < 1) throw Error("window_friend_events: l_m must be >= 1");
    FriendWindows w;
    w.num_friends = static_cast<int>(friends.size());
    w.window = l_m;
    const int pad = dataset.padding_item();
    for (int f : friends) {
        const auto& seq = dataset.sequences[f];
        std::vector<Event> vis;
        for (const auto& e : seq)
            if (e.time <= cutoff_time) vis.push_back(e);
        const int real = std::min<int>(l_m, static_cast<int>(vis.size()));
        for (int k = 0; k < l_m - real; ++k) {
            w.items.push_back(pad);
            w.times.push_back(0.0);
            w.is_pad.push_back(1);
        }
        for (int k = static_cast<int>(vis.size()) - real; k < static_cast<int>(vis.size()); ++k) {
            w.items.push_back(vis[k].item);
            w.times.push_back(vis[k].time);
            w.is_pad.push_back(0);
        }
    }
    return w;
}

double compute_tef(const Dataset& dataset, const SocialGraph& graph) {
    long pairs = 0, overlapping = 0;
    for (int u = 0; u < dataset.num_users; ++u) {
        if (dataset.sequences[u].empty()) continue;
        const double u_first = dataset.sequences[u].front().time;
        const double u_last = dataset.sequences[u].back().time;
        for (int f : graph.user_adjacency[u]) {
            if (f <= u) continue; // each unordered pair once
            if (dataset.sequences[f].empty()) continue;
            const double f_first = dataset.sequences[f].front().time;
            const double f_last = dataset.sequences[f].back().time;
            ++pairs;
            if (u_first <= f_last && f_first <= u_last) ++overlapping;
        }
    }
    return pairs == 0 ? 0.0 : static_cast<double>(overlapping) / pairs;
}

SimResult simulate_hawkes(const HawkesSimConfig& cfg) {
    if (cfg.base_rate <= 0 || cfg.decay <= 0 || cfg.horizon <= 0 ||
        cfg.self_alpha < 0 || cfg.mutual_alpha < 0 || cfg.num_users < 1 || cfg.num_items < 1)
        throw Error("simulate_hawkes: invalid config");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // social graph: G(n, p), symmetric, no self-loops
    std::vector<std::vector<int>> adj(cfg.num_users);
    SimResult res;
    for (int a = 0; a < cfg.num_users; ++a) {
        for (int b = a + 1; b < cfg.num_users; ++b) {
            if (unif(rng) < cfg.social_edge_prob) {
                adj[a].push_back(b);
                adj[b].push_back(a);
                res.edges.push_back({a, b});
            }
        }
    }
    int max_degree = 0;
    for (auto& l : adj) max_degree = std::max<int>(max_degree, static_cast<int>(l.size()));
    const double branching = (cfg.self_alpha + cfg.mutual_alpha * max_degree) / cfg.decay;
    if (branching >= 1.0)
        throw Error("simulate_hawkes: unstable configuration, branching ratio " +
                    std::to_string(branching) + " >= 1");

    // per-user preference distribution over a few items; drift uses its own
    // stream so turning it on never perturbs the event-time process
    std::vector<std::vector<int>> prefs(cfg.num_users);
    std::uniform_int_distribution<int> item_pick(0, cfg.num_items - 1);
    for (auto& p : prefs)
        for (int k = 0; k < cfg.preferred_items_per_user; ++k) p.push_back(item_pick(rng));
    std::mt19937_64 drift_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> drift_unif(0.0, 1.0);

    // thinning; R[u] is the excitation component of lambda_u right after the
    // current time (an upper bound until the next event), Rm[u] its
    // mutual-only share used to bias item selection
    std::vector<double> R(cfg.num_users, 0.0);
    std::vector<double> Rm(cfg.num_users, 0.0);
    std::vector<double> last_time(cfg.num_users, -1.0);
    std::vector<int> last_item(cfg.num_users, -1);
    double t = 0.0;
    while (true) {
        double lambda_bar = 0.0;
        for (int u = 0; u < cfg.num_users; ++u) lambda_bar += cfg.base_rate + R[u];
        const double delta = -std::log(1.0 - unif(rng)) / lambda_bar;
        const double tn = t + delta;
        if (tn > cfg.horizon) break;
        const double dec = std::exp(-cfg.decay * delta);
        for (auto& r : R) r *= dec;
        for (auto& r : Rm) r *= dec;
        double lambda_tot = 0.0;
        for (int u = 0; u < cfg.num_users; ++u) lambda_tot += cfg.base_rate + R[u];
        const double accept = unif(rng);
        t = tn;
        if (accept * lambda_bar > lambda_tot) continue; // thinned

        // pick the user proportionally to current intensity
        double pick = unif(rng) * lambda_tot;
        int u = cfg.num_users - 1;
        for (int v = 0; v < cfg.num_users; ++v) {
            pick -= cfg.base_rate + R[v];
            if (pick <= 0) { u = v; break; }
        }

        // item marking follows the intensity decomposition: with the mutual
        // share copy the most recent friend event's item, with the remaining
        // excitation share repeat the user's own last item (a burst), and
        // otherwise draw a fresh preference
        double friend_best_time = -1.0;
        int friend_best_item = -1;
        for (int f : adj[u]) {
            if (last_time[f] > friend_best_time) {
                friend_best_time = last_time[f];
                friend_best_item = last_item[f];
            }
        }
        int item;
        const double lam_u = cfg.base_rate + R[u];
        const double share = unif(rng) * lam_u;
        if (friend_best_item >= 0 && share < Rm[u]) {
            item = friend_best_item;
        } else if (last_item[u] >= 0 && share < R[u]) {
            item = last_item[u];
        } else {
            std::uniform_int_distribution<int> pp(0, cfg.preferred_items_per_user - 1);
            if (cfg.pref_drift > 0.0 && drift_unif(drift_rng) < cfg.pref_drift)
                prefs[u][pp(drift_rng)] = item_pick(drift_rng);
            item = prefs[u][pp(rng)];
        }

        res.events.push_back({u, item, t * 86400.0});
        last_time[u] = t;
        last_item[u] = item;
        R[u] += cfg.self_alpha;
        for (int f : adj[u]) {
            R[f] += cfg.mutual_alpha;
            Rm[f] += cfg.mutual_alpha;
        }
    }
    return res;
}

double HawkesOracle::intensity(double t) const {
    double lam = mu;
    for (const auto& [s, a] : sources)
        if (s < t) lam += a * std::exp(-beta * (t - s));
    return lam;
}

double HawkesOracle::integral(double a, double b) const {
    if (b < a) throw Error("HawkesOracle::integral: empty interval");
    double acc = mu * (b - a);
    for (const auto& [s, jump] : sources) {
        if (s >= b) continue;
        const double lo = std::max(a, s);
        acc += (jump / beta) * (std::exp(-beta * (lo - s)) - std::exp(-beta * (b - s)));
    }
    return acc;
}

} // namespace sten

#pragma once

// Event-log ingestion, leave-one-out dataset construction, social graph
// loading, friend sampling/windowing, the time-efficient-friend statistic and
// a multivariate exponential-kernel Hawkes simulator used by the oracle tests.

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sten {

struct EventRecord {
    int user_id = 0;
    int item_id = 0;
    double timestamp = 0.0; // seconds since epoch
};

struct ParseResult {
    std::vector<EventRecord> records;
    int malformed = 0;
};

// One record per line: user<TAB>item<TAB>timestamp. Lines starting with '#'
// are ignored. More than 10% malformed lines is an error.
ParseResult parse_events(const std::string& path);
void write_events(const std::string& path, const std::vector<EventRecord>& records,
                  const std::string& header_comment = "");

struct Event {
    int item = 0;
    double time = 0.0; // normalized days, dataset minimum shifted to 0
};

struct Dataset {
    std::vector<std::vector<Event>> sequences; // per user, time ascending
    int num_users = 0;
    int num_items = 0;
    double min_timestamp_seconds = 0.0; // subtracted during normalization
    double interval_cap_days = 0.0;     // 99th percentile of intra-user intervals
    std::vector<int> orig_user_ids;     // dense index -> original id
    std::vector<int> orig_item_ids;
    std::unordered_map<int, int> user_remap; // original id -> dense index

    int padding_item() const { return num_items; }
    // leave-one-out split markers
    int val_index(int user) const { return static_cast<int>(sequences[user].size()) - 2; }
    int test_index(int user) const { return static_cast<int>(sequences[user].size()) - 1; }
    int train_len(int user) const { return static_cast<int>(sequences[user].size()) - 2; }

    // Emits the event file format with de-normalized timestamps; re-parsing
    // and rebuilding yields identical sequences and splits.
    void save_events(const std::string& path) const;
};

// Iteratively filters users/items below the thresholds until a fixpoint,
// densely re-indexes ids, sorts per-user sequences by time (file order breaks
// ties) and drops exact (user, item, timestamp) duplicates. Users need at
// least 3 surviving events so that train/val/test all exist.
Dataset build_dataset(const std::vector<EventRecord>& events, int min_user_events,
                      int min_item_events);

struct SocialGraph {
    std::vector<std::vector<int>> user_adjacency; // sorted friend ids, symmetric
    std::vector<std::vector<int>> user_items;     // sorted unique interacted items

    int degree(int user) const { return static_cast<int>(user_adjacency[user].size()); }
};

// Edges are symmetrized; self-loops and edges to filtered-out users dropped.
SocialGraph social_from_edges(const std::vector<std::pair<int, int>>& edges,
                              const Dataset& dataset);
SocialGraph load_social(const std::string& path, const Dataset& dataset);
void write_social(const std::string& path, const std::vector<std::pair<int, int>>& edges,
                  const std::string& header_comment = "");

// All friends (sorted) when degree <= M, otherwise a uniform sample without
// replacement; deterministic given the seed.
std::vector<int> sample_friends(const SocialGraph& graph, int user, int M,
                                std::uint64_t rng_seed);

struct FriendWindows {
    // Flattened M x l_m rows, one block of l_m slots per friend,
    // chronologically ordered within each block.
    std::vector<int> items;           // padding slots hold dataset.padding_item()
    std::vector<double> times;        // padding slots hold 0
    std::vector<std::uint8_t> is_pad; // 1 = padding
    int num_friends = 0;
    int window = 0;
};

// Most recent l_m events per friend no later than cutoff_time; shorter
// histories are left-padded.
FriendWindows window_friend_events(const Dataset& dataset, const std::vector<int>& friends,
                                   int l_m, double cutoff_time);

// Fraction of social pairs whose [first, last] event spans overlap.
double compute_tef(const Dataset& dataset, const SocialGraph& graph);

struct HawkesSimConfig {
    int num_users = 10;
    double base_rate = 0.5;    // mu0, events/day
    double self_alpha = 0.1;   // excitation jump from own events
    double mutual_alpha = 0.1; // excitation jump from friends' events
    double decay = 1.0;        // beta0, 1/day
    double horizon = 100.0;    // days
    int num_items = 50;
    double social_edge_prob = 0.2;
    std::uint64_t seed = 1;
    int preferred_items_per_user = 5;
    // chance per fresh draw that one preferred item is replaced first; models
    // interest drift, so later events reflect the current preference set
    double pref_drift = 0.0;
};

struct SimResult {
    std::vector<EventRecord> events; // timestamps in seconds
    std::vector<std::pair<int, int>> edges;
};

// Ogata thinning over the multivariate process
//   lambda_u(t) = mu0 + self_alpha * sum_own exp(-beta0 dt)
//                     + mutual_alpha * sum_friends exp(-beta0 dt).
// Items come from a per-user preference distribution biased toward the most
// recent friend event's item, so the social signal is learnable.
SimResult simulate_hawkes(const HawkesSimConfig& config);

// Exact intensity/integral of an exponential-kernel Hawkes process; used as
// the independent oracle for the trapezoidal NLL and time-rescaling tests.
struct HawkesOracle {
    double mu = 0.0;
    double beta = 1.0;
    // (event time, jump size); events contribute for t strictly greater
    std::vector<std::pair<double, double>> sources;

    double intensity(double t) const;
    double integral(double a, double b) const;
};

} // namespace sten

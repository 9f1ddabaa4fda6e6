#pragma once

// Ranking evaluation (Recall/NDCG/MRR@k), the ablation suite and the
// attention-weight export.

#include "sten/training.hpp"

#include <map>
#include <string>
#include <vector>

namespace sten {

struct RankingResult {
    int user_id = 0;
    int ground_truth_item = 0;
    int rank = 0; // 1-based
    int candidate_count = 0;
};

// Candidates are all items minus `exclude` (padding never scores). Ties break
// by ascending item id.
RankingResult rank_ground_truth(const std::vector<double>& scores, int ground_truth,
                                const std::vector<int>& exclude);

struct MetricsEntry {
    double recall = 0.0;
    double ndcg = 0.0;
    double mrr = 0.0;
};

struct MetricsReport {
    std::map<int, MetricsEntry> at_k;
    int user_count = 0;
    std::string config_echo;
    std::string timestamp;

    std::string serialize() const;
    static MetricsReport parse(const std::string& text);
};

MetricsEntry metrics_at_k(const std::vector<RankingResult>& results, int k);
MetricsReport make_report(const std::vector<RankingResult>& results,
                          const std::vector<int>& ks, const std::string& config_echo);

enum class EvalMode { Validation, Test, TrainNextItem };

// Full-catalog ranking minus each user's input-prefix items.
MetricsReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                             const Dataset& dataset, const SocialGraph& graph,
                             const MetaPathIndex& index, EvalMode mode,
                             const std::vector<int>& ks);

struct AblationRow {
    std::string name;
    double recall10 = 0.0;
    double ndcg10 = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows; // w/o GE, w/o MT, w/o ST, w/o TC, Default
    std::string table() const;
    std::string serialize() const;
};

AblationReport run_ablation_suite(const Dataset& dataset, const SocialGraph& graph,
                                  const MetaPathIndex& index, const ModelConfig& base,
                                  const TrainConfig& tcfg, std::ostream* log = nullptr);

// Writes H1 (graph user attention row), H2 (mutual attention for the last
// target event), H3 (self attention with temporal terms) and H4 (same
// parameters, temporal terms removed). Masked cells are exact zeros.
void export_attention(const ModelParams& params, const ModelConfig& cfg,
                      const Dataset& dataset, const SocialGraph& graph,
                      const MetaPathIndex& index, int user, const std::string& path);

} // namespace sten

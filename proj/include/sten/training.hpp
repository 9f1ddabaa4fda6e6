#pragma once

// Joint optimization: BPR pairwise loss, temporal point process NLL via the
// trapezoidal rule, L2-regularized combined objective, Adam, and the epoch
// loop with early stopping on validation Recall@10.

#include "sten/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sten {

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 256;
    int epochs = 100;
    double gamma = 0.0; // L2 coefficient
    double dropout_ratio = 0.2;
    int negatives_per_positive = 1;
    int patience = 10;
    std::uint64_t seed = 1;

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v; // parallel to registry order

    void init(const std::vector<std::pair<std::string, TensorPtr>>& reg);
};

// mean over pairs of -ln sigma(pos - neg)
TensorPtr bpr_loss(Tape& tape, const TensorPtr& pos_scores, const TensorPtr& neg_scores);

// -sum log(lambda_i) + 1/2 sum_{i<n} dt_i (lambda_i + lambda_{i+1});
// integration runs over observed consecutive pairs only.
TensorPtr tpp_nll(Tape& tape, const TensorPtr& lambdas, const std::vector<double>& intervals);

// L2 norm over all registry parameters excluding the padding embedding row;
// squared variant behind the flag.
TensorPtr regularizer(Tape& tape, const ModelParams& params, bool squared);

TensorPtr joint_loss(Tape& tape, const TensorPtr& bpr, const TensorPtr& tpp,
                     const ModelParams& params, double gamma, bool squared);

// Bias-corrected in-place Adam update; throws on a NaN gradient, naming the
// parameter.
void adam_step(const std::vector<std::pair<std::string, TensorPtr>>& reg,
               AdamState& state, double lr);

struct EpochLog {
    int epoch = 0;
    double bpr = 0.0;
    double tpp = 0.0;
    double reg = 0.0;
    double val_recall10 = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams params;       // best-validation checkpoint
    ModelParams final_params; // state after the last completed epoch
    std::vector<EpochLog> history;
    double best_val_recall10 = 0.0;
    int best_epoch = -1;
    bool diverged = false;
};

ModelParams deep_copy(const ModelParams& params);

TrainResult train(const Dataset& dataset, const SocialGraph& graph,
                  const MetaPathIndex& index, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, std::ostream* log = nullptr);

} // namespace sten

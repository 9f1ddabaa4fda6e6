#include "sten/config.hpp"
#include "sten/eval.hpp"
#include "sten/gradsuite.hpp"
#include "sten/training.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sten;

namespace {

const char* kUsage =
    "usage: sten <command> [--config FILE] [--key value ...]\n"
    "commands:\n"
    "  prepare    build the dataset and meta-path neighbor cache\n"
    "  simulate   generate synthetic Hawkes events and social edges\n"
    "  train      fit a model and write a checkpoint\n"
    "  evaluate   rank held-out items with a checkpoint and print metrics\n"
    "  ablate     train and test the ablation variants\n"
    "  gradcheck  finite-difference check of all parameter gradients\n"
    "  explain    export attention matrices for one user\n"
    "keys use the config-file names (data.*, sim.*, model.*, train.*, eval.*);\n"
    "flags override file values. STEN_CACHE_DIR sets the cache directory.\n";

int usage_error(const std::string& msg) {
    std::cerr << "error: " << msg << "\n" << kUsage;
    return 2;
}

std::string cache_dir(const Config& cfg) {
    if (const char* env = std::getenv("STEN_CACHE_DIR")) return env;
    return cfg.get_str("data.out_dir", ".");
}

ModelConfig model_config(const Config& cfg) {
    ModelConfig m;
    m.d = cfg.get_int("model.d", m.d);
    m.M = cfg.get_int("model.M", m.M);
    m.l_m = cfg.get_int("model.l_m", m.l_m);
    m.l_max = cfg.get_int("model.l_max", m.l_max);
    m.max_order = cfg.get_int("model.max_order", m.max_order);
    m.metapath_cap = cfg.get_int("model.metapath_cap", m.metapath_cap);
    m.no_GE = cfg.get_bool("model.no_GE", false);
    m.no_MT = cfg.get_bool("model.no_MT", false);
    m.no_ST = cfg.get_bool("model.no_ST", false);
    m.no_TC = cfg.get_bool("model.no_TC", false);
    m.log_dt = cfg.get_bool("model.log_dt", false);
    m.squared_reg = cfg.get_bool("model.squared_reg", false);
    m.seed = cfg.get_u64("model.seed", 1);
    m.validate();
    return m;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig t;
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
    t.epochs = cfg.get_int("train.epochs", t.epochs);
    t.gamma = cfg.get_double("train.gamma", t.gamma);
    t.dropout_ratio = cfg.get_double("train.dropout_ratio", t.dropout_ratio);
    t.negatives_per_positive = cfg.get_int("train.negatives_per_positive", 1);
    t.patience = cfg.get_int("train.patience", t.patience);
    t.seed = cfg.get_u64("train.seed", 1);
    t.validate();
    return t;
}

struct LoadedData {
    Dataset dataset;
    SocialGraph graph;
    MetaPathIndex index;
};

LoadedData load_data(const Config& cfg, const ModelConfig& mcfg) {
    const std::string events_path = cfg.get_str("data.events", "");
    if (events_path.empty()) throw Error("data.events is required");
    auto parsed = parse_events(events_path);
    LoadedData d;
    d.dataset = build_dataset(parsed.records, cfg.get_int("data.min_user_events", 3),
                              cfg.get_int("data.min_item_events", 3));
    const std::string social_path = cfg.get_str("data.social", "");
    d.graph = social_path.empty() ? social_from_edges({}, d.dataset)
                                  : load_social(social_path, d.dataset);

    const fs::path cache = cache_dir(cfg);
    fs::create_directories(cache);
    std::ostringstream name;
    name << "metapath_o" << mcfg.max_order << "_c" << mcfg.metapath_cap
         << "_s" << mcfg.seed << ".txt";
    const fs::path cache_file = cache / name.str();
    if (fs::exists(cache_file)) {
        auto idx = MetaPathIndex::load(cache_file.string());
        if (idx.num_items() == d.dataset.num_items + 1 &&
            idx.max_order == mcfg.max_order && idx.cap == mcfg.metapath_cap) {
            d.index = std::move(idx);
            return d;
        }
    }
    d.index = build_metapath_neighbors(d.graph, mcfg.max_order, mcfg.metapath_cap,
                                       mcfg.seed);
    d.index.save(cache_file.string());
    return d;
}

std::string default_checkpoint(const Config& cfg) {
    return (fs::path(cache_dir(cfg)) / "model.ckpt").string();
}

std::vector<int> parse_ks(const std::string& spec) {
    std::vector<int> ks;
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) ks.push_back(std::stoi(tok));
    if (ks.empty()) throw Error("eval.ks must list at least one cutoff");
    return ks;
}

int cmd_prepare(const Config& cfg) {
    auto mcfg = model_config(cfg);
    auto d = load_data(cfg, mcfg);
    long events = 0;
    for (const auto& s : d.dataset.sequences) events += static_cast<long>(s.size());
    std::cout << "users " << d.dataset.num_users << "\n"
              << "items " << d.dataset.num_items << "\n"
              << "events " << events << "\n"
              << "interval_cap_days " << d.dataset.interval_cap_days << "\n"
              << "tef " << compute_tef(d.dataset, d.graph) << "\n"
              << "metapath cache written to " << cache_dir(cfg) << "\n";
    return 0;
}

int cmd_simulate(const Config& cfg) {
    HawkesSimConfig sim;
    sim.num_users = cfg.get_int("sim.num_users", sim.num_users);
    sim.base_rate = cfg.get_double("sim.base_rate", sim.base_rate);
    sim.self_alpha = cfg.get_double("sim.self_alpha", sim.self_alpha);
    sim.mutual_alpha = cfg.get_double("sim.mutual_alpha", sim.mutual_alpha);
    sim.decay = cfg.get_double("sim.decay", sim.decay);
    sim.horizon = cfg.get_double("sim.horizon", sim.horizon);
    sim.num_items = cfg.get_int("sim.num_items", sim.num_items);
    sim.social_edge_prob = cfg.get_double("sim.social_edge_prob", sim.social_edge_prob);
    sim.pref_drift = cfg.get_double("sim.pref_drift", sim.pref_drift);
    sim.seed = cfg.get_u64("sim.seed", 1);
    auto result = simulate_hawkes(sim);
    const fs::path out = cfg.get_str("data.out_dir", ".");
    fs::create_directories(out);
    write_events((out / "events.tsv").string(), result.events, "synthetic Hawkes events");
    write_social((out / "social.tsv").string(), result.edges, "synthetic social edges");
    std::cout << "wrote " << result.events.size() << " events and "
              << result.edges.size() << " edges to " << out.string() << "\n";
    return 0;
}

int cmd_train(const Config& cfg) {
    auto mcfg = model_config(cfg);
    auto tcfg = train_config(cfg);
    auto d = load_data(cfg, mcfg);
    auto result = train(d.dataset, d.graph, d.index, mcfg, tcfg, &std::cout);
    const std::string ckpt = cfg.get_str("train.checkpoint", default_checkpoint(cfg));
    save_checkpoint(ckpt, result.params, mcfg);
    std::cout << "best epoch " << result.best_epoch << " val recall@10 "
              << result.best_val_recall10 << "\n"
              << "checkpoint written to " << ckpt << "\n";
    if (result.diverged) std::cout << "warning: training diverged; kept best checkpoint\n";
    return 0;
}

int cmd_evaluate(const Config& cfg) {
    const std::string ckpt = cfg.get_str(
        "eval.checkpoint", cfg.get_str("train.checkpoint", default_checkpoint(cfg)));
    ModelConfig mcfg;
    auto params = load_checkpoint(ckpt, &mcfg);
    auto d = load_data(cfg, mcfg);
    if (params.num_users != d.dataset.num_users ||
        params.num_items != d.dataset.num_items)
        throw Error("checkpoint was trained on a different dataset (" +
                    std::to_string(params.num_users) + " users / " +
                    std::to_string(params.num_items) + " items)");
    const std::string mode_str = cfg.get_str("eval.mode", "test");
    EvalMode mode;
    if (mode_str == "test") mode = EvalMode::Test;
    else if (mode_str == "val") mode = EvalMode::Validation;
    else if (mode_str == "train") mode = EvalMode::TrainNextItem;
    else throw Error("eval.mode must be test, val or train, got '" + mode_str + "'");
    auto ks = parse_ks(cfg.get_str("eval.ks", "5,10,20"));
    auto report = evaluate_model(params, mcfg, d.dataset, d.graph, d.index, mode, ks);
    std::cout << report.serialize();
    return 0;
}

int cmd_ablate(const Config& cfg) {
    auto mcfg = model_config(cfg);
    auto tcfg = train_config(cfg);
    auto d = load_data(cfg, mcfg);
    auto report = run_ablation_suite(d.dataset, d.graph, d.index, mcfg, tcfg, &std::cout);
    std::cout << report.table() << report.serialize();
    return 0;
}

int cmd_gradcheck(const Config& cfg) {
    auto mcfg = model_config(cfg);
    auto report = run_grad_suite(mcfg, 1e-4);
    bool ok = true;
    for (const auto& [mod, err] : report) {
        std::cout << mod << " max_rel_err " << err << "\n";
        if (!(err <= 1e-4)) ok = false;
    }
    if (!ok) {
        std::cerr << "error: gradient check exceeded 1e-4\n";
        return 1;
    }
    return 0;
}

int cmd_explain(const Config& cfg) {
    const std::string ckpt = cfg.get_str(
        "eval.checkpoint", cfg.get_str("train.checkpoint", default_checkpoint(cfg)));
    ModelConfig mcfg;
    auto params = load_checkpoint(ckpt, &mcfg);
    auto d = load_data(cfg, mcfg);
    if (!cfg.has("eval.user")) throw Error("eval.user is required for explain");
    const int user = cfg.get_int("eval.user", 0);
    const std::string out = cfg.get_str(
        "eval.out",
        (fs::path(cache_dir(cfg)) / ("attention_user" + std::to_string(user) + ".txt"))
            .string());
    export_attention(params, mcfg, d.dataset, d.graph, d.index, user, out);
    std::cout << "attention export written to " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) return usage_error("missing command");
    const std::string cmd = argv[1];
    const bool known_cmd = cmd == "prepare" || cmd == "simulate" || cmd == "train" ||
                           cmd == "evaluate" || cmd == "ablate" || cmd == "gradcheck" ||
                           cmd == "explain";
    if (!known_cmd) return usage_error("unknown command '" + cmd + "'");

    Config cfg;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        if (flag.rfind("--", 0) != 0) return usage_error("unexpected argument '" + flag + "'");
        if (i + 1 >= argc) return usage_error("flag '" + flag + "' needs a value");
        std::string value = argv[++i];
        std::string key = flag.substr(2);
        if (key == "config") {
            try {
                cfg = Config::load(value);
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 1;
            }
        } else if (!Config::is_known(key)) {
            return usage_error("unknown flag '" + flag + "'");
        } else {
            overrides.emplace_back(key, value);
        }
    }
    try {
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        if (cmd == "prepare") return cmd_prepare(cfg);
        if (cmd == "simulate") return cmd_simulate(cfg);
        if (cmd == "train") return cmd_train(cfg);
        if (cmd == "evaluate") return cmd_evaluate(cfg);
        if (cmd == "ablate") return cmd_ablate(cfg);
        if (cmd == "gradcheck") return cmd_gradcheck(cfg);
        if (cmd == "explain") return cmd_explain(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

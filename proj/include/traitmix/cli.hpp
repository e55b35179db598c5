#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "traitmix/assessment.hpp"
#include "traitmix/corpus.hpp"
#include "traitmix/eval.hpp"
#include "traitmix/http_client.hpp"
#include "traitmix/pipeline.hpp"
#include "traitmix/trainer.hpp"

#define TRAITMIX_VERSION "0.1.0"

namespace traitmix {
namespace cli {

namespace fs = std::filesystem;

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cli", "cannot write '" + path.string() + "'");
    out << j.dump(indent) << "\n";
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cli", "cannot write '" + path.string() + "'");
    out << text;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cli", "cannot open '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, "cli", path + ": " + e.what());
    }
}

// Every artifact-producing run drops exactly one manifest beside its outputs:
// enough to reproduce the run (resolved config + seed) and find what it wrote.
inline void write_manifest(const fs::path& out_dir, const std::string& subcommand, const nlohmann::json& config,
                           uint64_t seed, const std::vector<std::string>& outputs) {
    write_json_file(out_dir / "manifest.json", {{"subcommand", subcommand},
                                                {"config", config},
                                                {"seed", seed},
                                                {"version", "traitmix " TRAITMIX_VERSION},
                                                {"created_at", iso_timestamp()},
                                                {"outputs", outputs}});
}

// ---------------------------------------------------------------------------
// chat client construction from a config section

inline std::unique_ptr<ChatClient> make_client(const nlohmann::json& section) {
    const std::string type = section.value("type", "mock");
    if (type == "mock") {
        auto mock = std::make_unique<MockChatClient>();
        if (section.contains("script")) mock->load_script_file(section.at("script").get<std::string>());
        if (section.contains("default")) mock->set_default_response(section.at("default").get<std::string>());
        return mock;
    }
    if (type == "http") {
        HttpClientConfig cfg;
        cfg.base_url = section.at("base_url").get<std::string>();
        cfg.path = section.value("path", cfg.path);
        cfg.model = section.value("model", cfg.model);
        cfg.api_key_env = section.value("api_key_env", cfg.api_key_env);
        cfg.max_retries = section.value("max_retries", cfg.max_retries);
        cfg.backoff_base_sec = section.value("backoff_base_sec", cfg.backoff_base_sec);
        return std::make_unique<HttpChatClient>(cfg);
    }
    fail(ErrorKind::config, "cli", "unknown client type '" + type + "'");
}

// ---------------------------------------------------------------------------
// shared option plumbing: CLI flag > config file > built-in default

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "run";
    uint64_t seed = 0;
};

inline nlohmann::json file_config(const CommonOpts& opts) {
    return opts.config_path.empty() ? nlohmann::json::object() : load_json_file(opts.config_path);
}

template <typename T>
void overlay(const CLI::Option* flag, const nlohmann::json& file, const char* key, T& value) {
    if (flag && flag->count() > 0) return; // explicit flag wins
    if (file.contains(key)) value = file.at(key).get<T>();
}

struct TrainOpts {
    ModelConfig model;
    TrainConfig train;
    std::string data_path;
    std::string regime = "moe";
    std::string mode = "psl";
    double alpha = 0.0; // 0 = match the total rank (unit adapter scale)
    double eval_fraction = 0.0;
};

inline ToyLm build_model(const TrainOpts& opts, uint64_t seed) {
    ModelConfig mc = opts.model;
    mc.regime = parse_regime(opts.regime);
    if (mc.regime != AdapterRegime::moe) mc.adapter.num_experts = 1;
    mc.adapter.alpha = opts.alpha > 0.0 ? opts.alpha : static_cast<double>(mc.adapter.total_rank);
    mc.adapter.psl_weight = opts.train.lambda;
    mc.validate();
    return ToyLm(mc, seed);
}

// ---------------------------------------------------------------------------
// subcommand bodies

inline int cmd_synth_data(const CommonOpts& common, size_t n_per_trait) {
    fs::create_directories(common.out_dir);
    auto records = synth_corpus(StyleSpec::synthetic_default(), n_per_trait, common.seed);
    const fs::path dataset = fs::path(common.out_dir) / "dataset.jsonl";
    write_dialogues(dataset.string(), records);
    write_manifest(common.out_dir, "synth-data",
                   {{"n_per_trait", n_per_trait}}, common.seed, {dataset.string()});
    std::cout << "wrote " << records.size() << " dialogues to " << dataset.string() << "\n";
    return 0;
}

inline int cmd_stats(const CommonOpts& common, const std::string& data_path, bool write_outputs) {
    LoadResult loaded = load_dialogues(data_path);
    for (const LineError& e : loaded.errors)
        std::cerr << "warning: " << data_path << ":" << e.line << ": " << e.message << "\n";
    CorpusStats stats = corpus_stats(loaded.records);
    const std::string table = format_stats_table(stats);
    std::cout << table;
    if (write_outputs) {
        fs::create_directories(common.out_dir);
        write_json_file(fs::path(common.out_dir) / "stats.json", to_json(stats));
        write_text_file(fs::path(common.out_dir) / "stats.txt", table);
        write_manifest(common.out_dir, "stats", {{"data", data_path}}, common.seed,
                       {(fs::path(common.out_dir) / "stats.json").string()});
    }
    return 0;
}

inline int cmd_pipeline_run(const CommonOpts& common) {
    if (common.config_path.empty()) fail(ErrorKind::config, "cli", "pipeline run requires --config");
    const nlohmann::json config = load_json_file(common.config_path);
    PipelineConfig cfg = pipeline_config_from_json(config);
    auto client = make_client(config.value("client", nlohmann::json::object()));

    fs::create_directories(common.out_dir);
    PipelineResult result = run_pipeline(cfg, *client);
    const fs::path report_path = fs::path(common.out_dir) / "pipeline_report.json";
    write_json_file(report_path, result.report.to_json());
    write_manifest(common.out_dir, "pipeline run", config, common.seed, {cfg.output_path, report_path.string()});
    std::cout << "pipeline: " << result.dataset.size() << " records -> " << cfg.output_path << "\n";
    for (const std::string& w : result.report.warnings) std::cout << "warning: " << w << "\n";
    return 0;
}

inline int cmd_train(const CommonOpts& common, TrainOpts& opts) {
    if (opts.data_path.empty()) fail(ErrorKind::config, "cli", "train requires --data");
    std::vector<DialogueRecord> records = load_dialogues_strict(opts.data_path);

    std::vector<DialogueRecord> eval_records;
    if (opts.eval_fraction > 0.0) {
        SplitResult sr = split(records, opts.eval_fraction, mix_seed(common.seed, 0x5eed));
        records = std::move(sr.train);
        eval_records = std::move(sr.eval);
    }

    opts.train.seed = common.seed;
    ToyLm model = build_model(opts, common.seed);
    RunReport report = train(opts.train, records, model);

    fs::create_directories(common.out_dir);
    const fs::path ckpt_dir = fs::path(common.out_dir) / "checkpoint";
    nlohmann::json run_echo = {{"train", to_json(opts.train)}, {"regime", opts.regime}};
    save_checkpoint(ckpt_dir.string(), model, run_echo);
    write_run_log((fs::path(common.out_dir) / "run_log.jsonl").string(), report);

    nlohmann::json report_json = {{"seed", report.seed},
                                  {"steps", report.steps.size()},
                                  {"initial_lm", report.initial_lm()},
                                  {"final_lm", report.final_lm()},
                                  {"wall_clock_sec", report.wall_clock_sec},
                                  {"records_used", report.records_used},
                                  {"records_skipped", report.records_skipped},
                                  {"final_weighting", report.final_weighting}};
    if (!eval_records.empty()) {
        EvalLmResult ev = eval_lm_matrix(model, eval_records, 50, opts.train.max_input_len);
        report_json["eval"] = to_json(ev);
    }
    write_json_file(fs::path(common.out_dir) / "run_report.json", report_json);

    nlohmann::json config = {{"model", to_json(model.config())}, {"train", to_json(opts.train)},
                             {"data", opts.data_path}, {"eval_fraction", opts.eval_fraction}};
    write_manifest(common.out_dir, "train", config, common.seed,
                   {ckpt_dir.string(), (fs::path(common.out_dir) / "run_log.jsonl").string(),
                    (fs::path(common.out_dir) / "run_report.json").string()});
    std::cout << "trained " << report.steps.size() << " steps; lm " << report.initial_lm() << " -> "
              << report.final_lm() << "\n";
    return 0;
}

inline int cmd_eval_lm(const CommonOpts& common, const std::string& checkpoint, const std::string& data_path,
                       size_t max_per_trait, size_t max_input_len) {
    ToyLm model = load_checkpoint(checkpoint);
    std::vector<DialogueRecord> records = load_dialogues_strict(data_path);
    EvalLmResult result = eval_lm_matrix(model, records, max_per_trait, max_input_len);

    fs::create_directories(common.out_dir);
    write_json_file(fs::path(common.out_dir) / "eval_lm.json", to_json(result));
    const std::string table = format_eval_table(result);
    write_text_file(fs::path(common.out_dir) / "eval_lm.txt", table);
    write_manifest(common.out_dir, "eval-lm",
                   {{"checkpoint", checkpoint}, {"data", data_path}, {"max_per_trait", max_per_trait}}, common.seed,
                   {(fs::path(common.out_dir) / "eval_lm.json").string()});
    std::cout << table;
    return 0;
}

inline int cmd_inventory(const CommonOpts& common, const std::string& checkpoint, const std::string& items_path,
                         size_t repeats, double temperature, size_t max_new, const std::string& baseline_report) {
    ToyLm model = load_checkpoint(checkpoint);
    std::vector<InventoryItem> items = items_path.empty() ? default_inventory() : load_inventory(items_path);
    StyleJudge judge(StyleSpec::synthetic_default());
    AssessmentConfig cfg;
    cfg.repeats = repeats;
    cfg.temperature = temperature;
    cfg.max_new = max_new;
    cfg.seed = common.seed;
    AggregateReport report = assess_local_model(model, items, judge, cfg);

    fs::create_directories(common.out_dir);
    write_json_file(fs::path(common.out_dir) / "assessment.json", to_json(report));

    std::string text;
    if (!baseline_report.empty()) {
        const nlohmann::json base = load_json_file(baseline_report);
        AggregateReport baseline;
        for (size_t i = 0; i < kTraitCount; ++i) {
            const auto& cell = base.at("cells").at(TraitId::from_index(i).code());
            baseline.condition_run_means[i] = cell.at("runs").get<std::vector<double>>();
        }
        baseline = aggregate(baseline.condition_run_means);
        SignificanceRow sig = compare_reports(report, baseline);
        text = format_report_row("model", report, &sig);
    } else {
        text = format_report_row("model", report);
    }
    write_text_file(fs::path(common.out_dir) / "assessment.txt", text);
    write_manifest(common.out_dir, "inventory",
                   {{"checkpoint", checkpoint},
                    {"items", items_path.empty() ? "<built-in>" : items_path},
                    {"repeats", repeats},
                    {"temperature", temperature},
                    {"max_new", max_new}},
                   common.seed, {(fs::path(common.out_dir) / "assessment.json").string()});
    std::cout << text;
    return 0;
}

inline int cmd_router_export(const CommonOpts& common, const std::string& checkpoint) {
    ToyLm model = load_checkpoint(checkpoint);
    auto layers = export_router_weights(model);
    fs::create_directories(common.out_dir);
    write_text_file(fs::path(common.out_dir) / "router_weights.csv", router_export_csv(layers));
    write_json_file(fs::path(common.out_dir) / "router_weights.json", router_export_json(layers));
    write_manifest(common.out_dir, "router-export", {{"checkpoint", checkpoint}}, common.seed,
                   {(fs::path(common.out_dir) / "router_weights.csv").string()});
    for (const auto& layer : layers)
        std::cout << layer.layer << ": gram offdiag mean " << layer.gram_offdiag_mean << " max "
                  << layer.gram_offdiag_max << "\n";
    return 0;
}

// One training+evaluation cell per (N, r, lambda) grid point.
inline int cmd_sweep(const CommonOpts& common, TrainOpts base_opts, const std::vector<size_t>& n_list,
                     const std::vector<size_t>& rank_list, const std::vector<double>& lambda_list, size_t jobs) {
    if (base_opts.data_path.empty()) fail(ErrorKind::config, "cli", "sweep requires --data");
    const std::vector<DialogueRecord> all_records = load_dialogues_strict(base_opts.data_path);
    SplitResult sr = split(all_records, base_opts.eval_fraction > 0 ? base_opts.eval_fraction : 0.1,
                           mix_seed(common.seed, 0x5eed));

    struct Cell {
        size_t n, rank;
        double lambda;
    };
    std::vector<Cell> cells;
    for (size_t n : n_list)
        for (size_t rank : rank_list) {
            if (rank % n != 0) {
                std::cout << "skip N=" << n << " r=" << rank << " (rank not divisible)\n";
                continue;
            }
            for (double lambda : lambda_list) cells.push_back({n, rank, lambda});
        }

    fs::create_directories(common.out_dir);
    std::vector<nlohmann::json> results(cells.size());
    detail::parallel_for(cells.size(), std::max<size_t>(jobs, 1), [&](size_t i) {
        const Cell& cell = cells[i];
        TrainOpts opts = base_opts;
        opts.model.adapter.num_experts = cell.n;
        opts.model.adapter.total_rank = cell.rank;
        opts.train.lambda = cell.lambda;
        opts.train.seed = common.seed;

        ToyLm model = build_model(opts, common.seed);
        const size_t params = trainable_param_count(model.config().adapter, model.adapted_layer_dims());
        RunReport report = train(opts.train, sr.train, model);
        EvalLmResult ev = eval_lm_matrix(model, sr.eval, 20, opts.train.max_input_len);

        double gram_mean = 0.0;
        if (model.config().regime == AdapterRegime::moe) {
            auto layers = export_router_weights(model);
            for (const auto& layer : layers) gram_mean += layer.gram_offdiag_mean / layers.size();
        }
        const std::string cell_name =
            "cell-n" + std::to_string(cell.n) + "-r" + std::to_string(cell.rank) + "-l" + std::to_string(cell.lambda);
        const fs::path cell_dir = fs::path(common.out_dir) / cell_name;
        fs::create_directories(cell_dir);
        write_run_log((cell_dir / "run_log.jsonl").string(), report);

        nlohmann::json cell_report = {{"num_experts", cell.n},
                                      {"total_rank", cell.rank},
                                      {"lambda", cell.lambda},
                                      {"adapter_param_count", params},
                                      {"initial_lm", report.initial_lm()},
                                      {"final_lm", report.final_lm()},
                                      {"matching_wins", ev.win_count},
                                      {"gram_offdiag_mean", gram_mean},
                                      {"wall_clock_sec", report.wall_clock_sec}};
        write_json_file(cell_dir / "report.json", cell_report);
        results[i] = std::move(cell_report);
    });

    nlohmann::json summary = nlohmann::json::array();
    for (auto& r : results)
        if (!r.is_null()) summary.push_back(std::move(r));
    write_json_file(fs::path(common.out_dir) / "sweep_summary.json", summary);
    write_manifest(common.out_dir, "sweep",
                   {{"n_list", n_list}, {"rank_list", rank_list}, {"lambda_list", lambda_list},
                    {"data", base_opts.data_path}, {"train", to_json(base_opts.train)}},
                   common.seed, {(fs::path(common.out_dir) / "sweep_summary.json").string()});
    std::cout << "sweep: " << summary.size() << " cells -> " << common.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// argument surface

inline int run(std::vector<std::string> args) {
    CLI::App app{"trait-conditioned mixture-of-LoRA-experts lab"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--config", common.config_path, "JSON config file (flags override it)")->expected(1);
    app.add_option("--seed", common.seed, "global RNG seed");
    app.add_option("--out", common.out_dir, "output directory");

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic trait-styled corpus");
    size_t n_per_trait = 200;
    auto* synth_n = synth->add_option("--n-per-trait", n_per_trait, "dialogues per trait condition");

    // stats
    auto* stats = app.add_subcommand("stats", "corpus statistics of a dialogue file");
    std::string stats_data;
    stats->add_option("--data", stats_data, "dialogue jsonl file")->required();
    bool stats_write = false;
    stats->add_flag("--write", stats_write, "also write stats.json/stats.txt under --out");

    // pipeline run
    auto* pipeline = app.add_subcommand("pipeline", "dataset construction pipeline");
    pipeline->require_subcommand(1);
    auto* pipeline_run = pipeline->add_subcommand("run", "run the three construction stages");

    // train
    auto* train_cmd = app.add_subcommand("train", "train adapters on a dialogue corpus");
    TrainOpts topts;
    std::string train_data;
    auto* train_data_opt = train_cmd->add_option("--data", train_data, "training corpus (jsonl)");
    auto* o_layers = train_cmd->add_option("--layers", topts.model.n_layers, "transformer layers");
    auto* o_dmodel = train_cmd->add_option("--d-model", topts.model.d_model, "model width");
    auto* o_heads = train_cmd->add_option("--heads", topts.model.n_heads, "attention heads");
    auto* o_experts = train_cmd->add_option("--experts", topts.model.adapter.num_experts, "expert count N");
    auto* o_rank = train_cmd->add_option("--rank", topts.model.adapter.total_rank, "total adapter rank r");
    auto* o_alpha = train_cmd->add_option("--alpha", topts.alpha, "adapter scale (default: rank)");
    auto* o_dp = train_cmd->add_option("--personality-dim", topts.model.adapter.personality_dim, "d_P");
    auto* o_shared = train_cmd->add_flag("--shared-router", topts.model.adapter.shared_router,
                                         "one router for all layers");
    auto* o_epochs = train_cmd->add_option("--epochs", topts.train.epochs, "training epochs");
    auto* o_batch = train_cmd->add_option("--batch-size", topts.train.batch_size, "batch size");
    auto* o_lr = train_cmd->add_option("--lr", topts.train.learning_rate, "learning rate");
    auto* o_lambda = train_cmd->add_option("--lambda", topts.train.lambda, "regularizer strength");
    auto* o_mode = train_cmd->add_option("--mode", topts.mode, "regularizer: psl | aux | none");
    auto* o_regime = train_cmd->add_option("--baseline", topts.regime, "moe | single_lora | per_trait_lora");
    auto* o_maxin = train_cmd->add_option("--max-input-len", topts.train.max_input_len, "token truncation");
    auto* o_clip = train_cmd->add_flag("--clip-gradients", topts.train.clip_gradients, "global-norm clip at 1.0");
    auto* o_evalfrac = train_cmd->add_option("--eval-fraction", topts.eval_fraction, "held-out fraction");

    // eval-lm
    auto* eval_cmd = app.add_subcommand("eval-lm", "matching/mismatched cross-entropy matrix");
    std::string eval_ckpt, eval_data;
    size_t eval_max_per_trait = 50, eval_max_input = 128;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--data", eval_data, "evaluation corpus (jsonl)")->required();
    eval_cmd->add_option("--max-per-trait", eval_max_per_trait, "records per trait cap");
    eval_cmd->add_option("--max-input-len", eval_max_input, "token truncation");

    // inventory
    auto* inv_cmd = app.add_subcommand("inventory", "administer, score and aggregate an inventory");
    std::string inv_ckpt, inv_items, inv_baseline;
    size_t inv_repeats = 5, inv_max_new = 48;
    double inv_temperature = 0.8;
    inv_cmd->add_option("--checkpoint", inv_ckpt, "checkpoint directory")->required();
    inv_cmd->add_option("--items", inv_items, "inventory json (default: built-in 20 items)");
    inv_cmd->add_option("--repeats", inv_repeats, "independent runs per item");
    inv_cmd->add_option("--temperature", inv_temperature, "generation temperature");
    inv_cmd->add_option("--max-new", inv_max_new, "response length cap");
    inv_cmd->add_option("--baseline-report", inv_baseline, "assessment.json to test significance against");

    // router-export
    auto* export_cmd = app.add_subcommand("router-export", "per-trait expert weightings from a checkpoint");
    std::string export_ckpt;
    export_cmd->add_option("--checkpoint", export_ckpt, "checkpoint directory")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "grid over experts/rank/lambda");
    std::string sweep_data;
    std::vector<size_t> sweep_n = {1, 2, 4, 8, 16, 32};
    std::vector<size_t> sweep_rank = {64};
    std::vector<double> sweep_lambda = {0.001, 0.01, 0.1, 0.5};
    size_t sweep_jobs = 1;
    TrainOpts sweep_opts;
    sweep_cmd->add_option("--data", sweep_data, "training corpus (jsonl)")->required();
    sweep_cmd->add_option("--n", sweep_n, "expert counts")->delimiter(',');
    sweep_cmd->add_option("--rank", sweep_rank, "total ranks")->delimiter(',');
    sweep_cmd->add_option("--lambda", sweep_lambda, "regularizer strengths")->delimiter(',');
    sweep_cmd->add_option("--jobs", sweep_jobs, "parallel cells");
    sweep_cmd->add_option("--epochs", sweep_opts.train.epochs, "training epochs");
    sweep_cmd->add_option("--lr", sweep_opts.train.learning_rate, "learning rate");
    sweep_cmd->add_option("--layers", sweep_opts.model.n_layers, "transformer layers");
    sweep_cmd->add_option("--d-model", sweep_opts.model.d_model, "model width");
    sweep_cmd->add_option("--max-input-len", sweep_opts.train.max_input_len, "token truncation");
    sweep_cmd->add_option("--eval-fraction", sweep_opts.eval_fraction, "held-out fraction (default 0.1)");

    std::vector<const char*> argv;
    argv.push_back("traitmix");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) {
            const nlohmann::json file = file_config(common);
            overlay(synth_n, file, "n_per_trait", n_per_trait);
            return cmd_synth_data(common, n_per_trait);
        }
        if (stats->parsed()) return cmd_stats(common, stats_data, stats_write);
        if (pipeline->parsed()) {
            if (!pipeline_run->parsed()) fail(ErrorKind::config, "cli", "pipeline requires the 'run' subcommand");
            return cmd_pipeline_run(common);
        }
        if (train_cmd->parsed()) {
            const nlohmann::json file = file_config(common);
            topts.data_path = train_data;
            overlay(train_data_opt, file, "data", topts.data_path);
            overlay(o_layers, file, "layers", topts.model.n_layers);
            overlay(o_dmodel, file, "d_model", topts.model.d_model);
            overlay(o_heads, file, "heads", topts.model.n_heads);
            overlay(o_experts, file, "experts", topts.model.adapter.num_experts);
            overlay(o_rank, file, "rank", topts.model.adapter.total_rank);
            overlay(o_alpha, file, "alpha", topts.alpha);
            overlay(o_dp, file, "personality_dim", topts.model.adapter.personality_dim);
            overlay(o_shared, file, "shared_router", topts.model.adapter.shared_router);
            overlay(o_epochs, file, "epochs", topts.train.epochs);
            overlay(o_batch, file, "batch_size", topts.train.batch_size);
            overlay(o_lr, file, "learning_rate", topts.train.learning_rate);
            overlay(o_lambda, file, "lambda", topts.train.lambda);
            overlay(o_mode, file, "mode", topts.mode);
            overlay(o_regime, file, "baseline", topts.regime);
            overlay(o_maxin, file, "max_input_len", topts.train.max_input_len);
            overlay(o_clip, file, "clip_gradients", topts.train.clip_gradients);
            overlay(o_evalfrac, file, "eval_fraction", topts.eval_fraction);
            topts.train.mode = parse_regularizer_mode(topts.mode);
            return cmd_train(common, topts);
        }
        if (eval_cmd->parsed())
            return cmd_eval_lm(common, eval_ckpt, eval_data, eval_max_per_trait, eval_max_input);
        if (inv_cmd->parsed())
            return cmd_inventory(common, inv_ckpt, inv_items, inv_repeats, inv_temperature, inv_max_new, inv_baseline);
        if (export_cmd->parsed()) return cmd_router_export(common, export_ckpt);
        if (sweep_cmd->parsed()) {
            sweep_opts.data_path = sweep_data;
            sweep_opts.mode = "psl";
            sweep_opts.train.mode = RegularizerMode::psl;
            return cmd_sweep(common, sweep_opts, sweep_n, sweep_rank, sweep_lambda, sweep_jobs);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace cli
} // namespace traitmix

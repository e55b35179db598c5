#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "traitmix/cli.hpp"

using namespace traitmix;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = std::string(TRAITMIX_TEST_DIR) + "/fixtures";

fs::path fresh_dir(const std::string& stem) {
    auto dir = fs::temp_directory_path() / (stem + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(std::initializer_list<std::string> args) { return cli::run(std::vector<std::string>(args)); }

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

// tiny-model arguments shared by the CLI training tests
std::vector<std::string> tiny_train_args(const fs::path& out, const std::string& data, const std::string& mode,
                                         const std::string& lambda, uint64_t seed = 5) {
    return {"--seed", std::to_string(seed), "--out",   out.string(),   "train",        "--data",
            data,     "--layers",           "1",       "--d-model",    "16",           "--heads",
            "2",      "--experts",          "2",       "--rank",       "4",            "--personality-dim",
            "4",      "--epochs",           "1",       "--batch-size", "8",            "--max-input-len",
            "64",     "--lr",               "1e-2",    "--mode",       mode,           "--lambda",
            lambda};
}

} // namespace

TEST_CASE("usage errors exit with code 2", "[cli]") {
    REQUIRE(run_cli({"no-such-subcommand"}) == 2);
    REQUIRE(run_cli({"stats", "--no-such-flag"}) == 2);
    REQUIRE(run_cli({"stats"}) == 2); // --data is required
    REQUIRE(run_cli({}) == 2);
}

TEST_CASE("domain errors exit with code 1", "[cli]") {
    REQUIRE(run_cli({"stats", "--data", "/nonexistent/file.jsonl"}) == 1);
    REQUIRE(run_cli({"router-export", "--checkpoint", "/nonexistent/ckpt"}) == 1);
}

TEST_CASE("stats prints the same table the library computes", "[cli]") {
    const std::string fixture = kFixtures + "/dialogues_mixed.jsonl";
    std::ostringstream captured;
    auto* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = run_cli({"stats", "--data", fixture});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);

    LoadResult loaded = load_dialogues(fixture);
    REQUIRE(captured.str() == format_stats_table(corpus_stats(loaded.records)));
}

TEST_CASE("synth-data writes a deterministic dataset with a manifest", "[cli]") {
    auto dir_a = fresh_dir("traitmix-cli-synth-a");
    auto dir_b = fresh_dir("traitmix-cli-synth-b");
    REQUIRE(run_cli({"--seed", "9", "--out", dir_a.string(), "synth-data", "--n-per-trait", "3"}) == 0);
    REQUIRE(run_cli({"--seed", "9", "--out", dir_b.string(), "synth-data", "--n-per-trait", "3"}) == 0);

    auto read_file = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    REQUIRE(read_file(dir_a / "dataset.jsonl") == read_file(dir_b / "dataset.jsonl"));

    nlohmann::json manifest = read_json(dir_a / "manifest.json");
    REQUIRE(manifest["subcommand"] == "synth-data");
    REQUIRE(manifest["seed"] == 9);
    REQUIRE(manifest["config"]["n_per_trait"] == 3);
    REQUIRE(load_dialogues((dir_a / "dataset.jsonl").string()).records.size() == 30);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("train with lambda zero matches mode none exactly", "[cli]") {
    auto data_dir = fresh_dir("traitmix-cli-data");
    REQUIRE(run_cli({"--seed", "4", "--out", data_dir.string(), "synth-data", "--n-per-trait", "3"}) == 0);
    const std::string data = (data_dir / "dataset.jsonl").string();

    auto out_psl = fresh_dir("traitmix-cli-train-psl");
    auto out_none = fresh_dir("traitmix-cli-train-none");
    REQUIRE(cli::run(tiny_train_args(out_psl, data, "psl", "0")) == 0);
    REQUIRE(cli::run(tiny_train_args(out_none, data, "none", "0")) == 0);

    nlohmann::json a = read_json(out_psl / "run_report.json");
    nlohmann::json b = read_json(out_none / "run_report.json");
    REQUIRE(a["final_lm"].get<double>() == b["final_lm"].get<double>());
    REQUIRE(a["initial_lm"].get<double>() == b["initial_lm"].get<double>());

    // artifacts exist: checkpoint, run log, manifest
    REQUIRE(fs::exists(out_psl / "checkpoint" / "manifest.json"));
    REQUIRE(fs::exists(out_psl / "checkpoint" / "tensors.bin"));
    REQUIRE(fs::exists(out_psl / "run_log.jsonl"));
    REQUIRE(read_json(out_psl / "manifest.json")["subcommand"] == "train");

    fs::remove_all(data_dir);
    fs::remove_all(out_psl);
    fs::remove_all(out_none);
}

TEST_CASE("config file values apply beneath explicit flags", "[cli]") {
    auto data_dir = fresh_dir("traitmix-cli-cfgdata");
    REQUIRE(run_cli({"--seed", "4", "--out", data_dir.string(), "synth-data", "--n-per-trait", "3"}) == 0);
    const std::string data = (data_dir / "dataset.jsonl").string();

    auto cfg_dir = fresh_dir("traitmix-cli-cfg");
    const fs::path cfg_path = cfg_dir / "config.json";
    std::ofstream(cfg_path) << nlohmann::json{{"data", data},     {"layers", 1},  {"d_model", 16},
                                              {"heads", 2},       {"experts", 2}, {"rank", 4},
                                              {"personality_dim", 4}, {"epochs", 1},  {"batch_size", 8},
                                              {"max_input_len", 64},  {"mode", "none"}}
                                   .dump();

    auto out = fresh_dir("traitmix-cli-cfgout");
    // --epochs 2 overrides the file's 1; everything else comes from the file
    REQUIRE(run_cli({"--config", cfg_path.string(), "--seed", "4", "--out", out.string(), "train", "--epochs", "2"}) ==
            0);
    nlohmann::json manifest = read_json(out / "manifest.json");
    REQUIRE(manifest["config"]["train"]["epochs"] == 2);
    REQUIRE(manifest["config"]["model"]["d_model"] == 16);
    // ceil(30/8) = 4 steps per epoch, 2 epochs
    REQUIRE(read_json(out / "run_report.json")["steps"] == 8);

    fs::remove_all(data_dir);
    fs::remove_all(cfg_dir);
    fs::remove_all(out);
}

TEST_CASE("eval-lm, inventory and router-export consume a trained checkpoint", "[cli]") {
    auto data_dir = fresh_dir("traitmix-cli-evdata");
    REQUIRE(run_cli({"--seed", "4", "--out", data_dir.string(), "synth-data", "--n-per-trait", "4"}) == 0);
    const std::string data = (data_dir / "dataset.jsonl").string();

    auto train_out = fresh_dir("traitmix-cli-evtrain");
    REQUIRE(cli::run(tiny_train_args(train_out, data, "psl", "0.1")) == 0);
    const std::string ckpt = (train_out / "checkpoint").string();

    auto eval_out = fresh_dir("traitmix-cli-eval");
    REQUIRE(run_cli({"--out", eval_out.string(), "eval-lm", "--checkpoint", ckpt, "--data", data,
                     "--max-per-trait", "2", "--max-input-len", "64"}) == 0);
    nlohmann::json eval = read_json(eval_out / "eval_lm.json");
    REQUIRE(eval.contains("cross_entropy"));
    REQUIRE(eval["win_count"].get<size_t>() <= 10);

    auto inv_out = fresh_dir("traitmix-cli-inv");
    REQUIRE(run_cli({"--seed", "2", "--out", inv_out.string(), "inventory", "--checkpoint", ckpt, "--repeats", "2",
                     "--max-new", "8"}) == 0);
    nlohmann::json inv = read_json(inv_out / "assessment.json");
    REQUIRE(inv.contains("overall"));

    auto exp_out = fresh_dir("traitmix-cli-export");
    REQUIRE(run_cli({"--out", exp_out.string(), "router-export", "--checkpoint", ckpt}) == 0);
    std::ifstream csv(exp_out / "router_weights.csv");
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "layer,trait,expert,weight");
    // per-trait rows sum to one
    nlohmann::json weights = read_json(exp_out / "router_weights.json");
    for (const auto& layer : weights)
        for (const auto& [code, row] : layer["weights"].items()) {
            double sum = 0.0;
            for (double w : row.get<std::vector<double>>()) sum += w;
            REQUIRE(std::fabs(sum - 1.0) <= 1e-9);
        }

    fs::remove_all(data_dir);
    fs::remove_all(train_out);
    fs::remove_all(eval_out);
    fs::remove_all(inv_out);
    fs::remove_all(exp_out);
}

TEST_CASE("sweep emits one report per cell with constant parameter parity", "[cli]") {
    auto data_dir = fresh_dir("traitmix-cli-swdata");
    REQUIRE(run_cli({"--seed", "4", "--out", data_dir.string(), "synth-data", "--n-per-trait", "3"}) == 0);
    const std::string data = (data_dir / "dataset.jsonl").string();

    auto out = fresh_dir("traitmix-cli-sweep");
    REQUIRE(run_cli({"--seed", "4", "--out", out.string(), "sweep", "--data", data, "--n", "1,2,4", "--rank", "4",
                     "--lambda", "0.1", "--layers", "1", "--d-model", "16", "--epochs", "1", "--lr", "1e-2",
                     "--max-input-len", "64", "--eval-fraction", "0.34"}) == 0);

    nlohmann::json summary = read_json(out / "sweep_summary.json");
    REQUIRE(summary.size() == 3);
    const size_t parity = summary[0]["adapter_param_count"].get<size_t>();
    for (const auto& cell : summary) {
        REQUIRE(cell["adapter_param_count"].get<size_t>() == parity);
        const std::string cell_dir = "cell-n" + std::to_string(cell["num_experts"].get<size_t>()) + "-r4-l0.100000";
        REQUIRE(fs::exists(out / cell_dir / "report.json"));
        REQUIRE(fs::exists(out / cell_dir / "run_log.jsonl"));
    }

    fs::remove_all(data_dir);
    fs::remove_all(out);
}

TEST_CASE("pipeline subcommand requires run and a config", "[cli]") {
    REQUIRE(run_cli({"pipeline"}) == 2); // missing run subcommand is a usage error
    REQUIRE(run_cli({"pipeline", "run"}) == 1); // missing --config is a domain error
}

TEST_CASE("pipeline run drives the mock client end to end", "[cli]") {
    auto dir = fresh_dir("traitmix-cli-pipe");

    // script a one-trait-per-dimension mini pipeline: quota 1, one sentence each
    MockChatClient scripted;
    PipelineConfig pcfg;
    pcfg.quota_per_trait = 1;
    pcfg.output_path = (dir / "data.jsonl").string();
    nlohmann::json seeds = nlohmann::json::object();
    for (const TraitId& trait : TraitId::all()) {
        const std::string sentence = "seed for " + trait.code();
        seeds[trait.code()] = {sentence};
        scripted.script(seed_topic_system_prompt(trait.dimension), sentence,
                        std::string("facet-") + level_word(trait.level));
        std::string text;
        for (int p = 0; p < 3; ++p) {
            text += "Character1: q" + std::to_string(p) + "?\n";
            text += "Character2: a" + std::to_string(p) + " for " + trait.code() + "\n";
        }
        scripted.script(synthesis_system_prompt(trait), synthesis_user_prompt(trait, sentence), text);
        DialogueRecord rec = parse_dialogue_text(text, trait, sentence);
        scripted.script(validation_system_prompt(), validation_user_prompt(render_dialogue(rec)),
                        "Reason: ok\nResult: " + std::string(dimension_name(trait.dimension)));
    }
    const fs::path script_path = dir / "script.json";
    scripted.save_script(script_path.string());

    nlohmann::json config = {{"seed_sentences", seeds},
                             {"quota_per_trait", 1},
                             {"output_path", (dir / "data.jsonl").string()},
                             {"client", {{"type", "mock"}, {"script", script_path.string()}}}};
    const fs::path config_path = dir / "pipeline.json";
    std::ofstream(config_path) << config.dump();

    REQUIRE(run_cli({"--config", config_path.string(), "--out", (dir / "out").string(), "pipeline", "run"}) == 0);
    REQUIRE(load_dialogues((dir / "data.jsonl").string()).records.size() == 10);
    nlohmann::json report = read_json(dir / "out" / "pipeline_report.json");
    REQUIRE(report["totals"]["final_records"] == 10);
    REQUIRE(read_json(dir / "out" / "manifest.json")["subcommand"] == "pipeline run");
    fs::remove_all(dir);
}

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "traitmix/corpus.hpp"
#include "traitmix/hashing.hpp"
#include "traitmix/model.hpp"
#include "traitmix/objectives.hpp"
#include "traitmix/optim.hpp"

namespace traitmix {

struct TrainConfig {
    size_t epochs = 3;
    size_t batch_size = 16;
    double learning_rate = 5e-4; // grid {5e-5, 5e-4, 5e-3}
    size_t max_input_len = 128;
    size_t max_output_len = 64;
    double lambda = 0.1;
    RegularizerMode mode = RegularizerMode::psl;
    uint64_t seed = 0;
    bool clip_gradients = false; // clip-by-global-norm 1.0 when set

    void validate() const {
        if (epochs < 1) fail(ErrorKind::config, "trainer", "epochs must be >= 1");
        if (batch_size < 1) fail(ErrorKind::config, "trainer", "batch_size must be >= 1");
        if (!(learning_rate > 0.0)) fail(ErrorKind::config, "trainer", "learning_rate must be positive");
        if (lambda < 0.0) fail(ErrorKind::config, "trainer", "lambda must be nonnegative");
        if (max_input_len < 8) fail(ErrorKind::config, "trainer", "max_input_len too small");
    }
};

struct StepRecord {
    size_t step = 0;
    LossBreakdown losses;
    double lr = 0.0;
};

struct RunReport {
    uint64_t seed = 0;
    std::vector<StepRecord> steps;
    // final per-router weighting matrices, row-major [num_experts x traits]
    std::vector<std::vector<double>> final_weighting;
    double wall_clock_sec = 0.0;
    size_t records_used = 0;
    size_t records_skipped = 0;

    double initial_lm() const { return steps.front().losses.lm; }
    double final_lm() const { return steps.back().losses.lm; }
};

// Called after each step's forward/backward but before the parameter update,
// so the observed state is exactly what produced the logged losses.
using StepHook = std::function<void(size_t step, ToyLm& model)>;

// Optimizes experts, routers and the personality table under the combined
// objective; the base transformer never changes. Deterministic under
// cfg.seed for a fixed model and corpus.
inline RunReport train(const TrainConfig& cfg, const std::vector<DialogueRecord>& corpus, ToyLm& model,
                       const StepHook& hook = nullptr) {
    cfg.validate();
    if (corpus.empty()) fail(ErrorKind::config, "trainer", "training corpus is empty");
    const bool is_moe = model.config().regime == AdapterRegime::moe;
    if (is_moe) {
        std::array<size_t, kTraitCount> counts{};
        for (const DialogueRecord& rec : corpus) counts[rec.trait.index()] += 1;
        for (size_t i = 0; i < kTraitCount; ++i)
            if (counts[i] == 0)
                fail(ErrorKind::config, "trainer",
                     "mixture training requires data for every trait; missing " + TraitId::from_index(i).code());
    }

    const bool with_tag = model.config().regime == AdapterRegime::single_lora;
    std::vector<size_t> usable;
    for (size_t i = 0; i < corpus.size(); ++i)
        if (has_discloser_targets(corpus[i], with_tag, cfg.max_input_len)) usable.push_back(i);
    if (usable.empty()) fail(ErrorKind::config, "trainer", "no record keeps a discloser target at this input length");

    RunReport report;
    report.seed = cfg.seed;
    report.records_used = usable.size();
    report.records_skipped = corpus.size() - usable.size();

    Adam optimizer(model.trainable_params(),
                   {.lr = cfg.learning_rate, .clip_global_norm = cfg.clip_gradients ? 1.0 : 0.0});

    const auto t_start = std::chrono::steady_clock::now();
    const size_t steps_per_epoch = (usable.size() + cfg.batch_size - 1) / cfg.batch_size;
    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order = usable;
        Rng shuffle_rng(mix_seed(cfg.seed, epoch, 0xba7c4));
        shuffle_rng.shuffle(order);
        for (size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            const size_t begin = s * cfg.batch_size;
            const size_t end = std::min(begin + cfg.batch_size, order.size());

            Tape tape;
            ParamBinding bind(tape);
            std::optional<Tensor> lm_sum;
            for (size_t k = begin; k < end; ++k) {
                const DialogueRecord& rec = corpus[order[k]];
                Tensor loss = dialogue_lm_loss(tape, bind, model, rec, rec.trait, cfg.max_input_len);
                lm_sum = lm_sum ? add(*lm_sum, loss) : loss;
            }
            Tensor lm = scale(*lm_sum, 1.0 / static_cast<double>(end - begin));

            std::vector<Tensor> regs;
            const RegularizerMode mode = is_moe ? cfg.mode : RegularizerMode::none;
            if (is_moe && mode != RegularizerMode::none) {
                for (size_t r = 0; r < model.router_count(); ++r) {
                    Tensor m = weighting_matrix(bind, model.personality_table(), model.router(r));
                    regs.push_back(mode == RegularizerMode::psl ? specialization_loss(m)
                                                                : auxiliary_balance_loss(m));
                }
            }
            TotalLoss objective = total_loss(lm, regs, cfg.lambda, mode);
            if (!std::isfinite(objective.breakdown.total))
                fail(ErrorKind::state, "trainer",
                     "non-finite loss at step " + std::to_string(step) + " (lm=" + std::to_string(objective.breakdown.lm) +
                         "); aborting");

            tape.backward(objective.total);
            optimizer.zero_grad();
            bind.accumulate_grads();
            if (hook) hook(step, model);
            optimizer.step();

            report.steps.push_back({step, objective.breakdown, cfg.learning_rate});
        }
    }
    report.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (is_moe)
        for (size_t r = 0; r < model.router_count(); ++r)
            report.final_weighting.push_back(weighting_matrix_values(model.personality_table(), model.router(r)));
    return report;
}

// ---------------------------------------------------------------------------
// config (de)serialization

inline nlohmann::json to_json(const AdapterConfig& c) {
    return {{"num_experts", c.num_experts},   {"total_rank", c.total_rank},
            {"alpha", c.alpha},               {"psl_weight", c.psl_weight},
            {"personality_dim", c.personality_dim}, {"trait_count", c.trait_count},
            {"adapted_matrices", c.adapted_matrices}, {"shared_router", c.shared_router}};
}

inline AdapterConfig adapter_config_from_json(const nlohmann::json& j) {
    AdapterConfig c;
    c.num_experts = j.value("num_experts", c.num_experts);
    c.total_rank = j.value("total_rank", c.total_rank);
    c.alpha = j.value("alpha", c.alpha);
    c.psl_weight = j.value("psl_weight", c.psl_weight);
    c.personality_dim = j.value("personality_dim", c.personality_dim);
    c.trait_count = j.value("trait_count", c.trait_count);
    c.adapted_matrices = j.value("adapted_matrices", c.adapted_matrices);
    c.shared_router = j.value("shared_router", c.shared_router);
    return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers},   {"d_model", c.d_model},
            {"n_heads", c.n_heads},     {"ffn_mult", c.ffn_mult},
            {"context_len", c.context_len}, {"regime", to_string(c.regime)},
            {"adapter", to_json(c.adapter)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.context_len = j.value("context_len", c.context_len);
    c.regime = parse_regime(j.value("regime", std::string("moe")));
    if (j.contains("adapter")) c.adapter = adapter_config_from_json(j.at("adapter"));
    return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"max_input_len", c.max_input_len},
            {"max_output_len", c.max_output_len},
            {"lambda", c.lambda},
            {"mode", to_string(c.mode)},
            {"seed", c.seed},
            {"clip_gradients", c.clip_gradients}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_input_len = j.value("max_input_len", c.max_input_len);
    c.max_output_len = j.value("max_output_len", c.max_output_len);
    c.lambda = j.value("lambda", c.lambda);
    c.mode = parse_regularizer_mode(j.value("mode", std::string("psl")));
    c.seed = j.value("seed", c.seed);
    c.clip_gradients = j.value("clip_gradients", c.clip_gradients);
    return c;
}

inline nlohmann::json step_to_json(const StepRecord& s) {
    nlohmann::json j = {{"step", s.step}, {"lm", s.losses.lm}, {"total", s.losses.total}, {"lr", s.lr}};
    j["psl"] = s.losses.psl ? nlohmann::json(*s.losses.psl) : nlohmann::json(nullptr);
    j["aux"] = s.losses.aux ? nlohmann::json(*s.losses.aux) : nlohmann::json(nullptr);
    return j;
}

// One JSON object per step: {step, lm, psl, aux, total, lr}.
inline void write_run_log(const std::string& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "trainer", "cannot write '" + path + "'");
    for (const StepRecord& s : report.steps) out << step_to_json(s).dump() << "\n";
}

// ---------------------------------------------------------------------------
// checkpoints: directory with manifest.json + tensors.bin (f32, little endian)

namespace detail {

inline std::vector<unsigned char> to_f32_bytes(const std::vector<double>& values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(bytes.data() + i * 4, &f, 4);
    }
    return bytes;
}

inline std::vector<double> from_f32_bytes(std::span<const unsigned char> bytes) {
    std::vector<double> values(bytes.size() / 4);
    for (size_t i = 0; i < values.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * 4, 4);
        values[i] = static_cast<double>(f);
    }
    return values;
}

} // namespace detail

constexpr int kCheckpointFormatVersion = 1;

// Serializes every parameter (frozen base included). Writes are atomic:
// temp files in the target directory are renamed into place last.
inline void save_checkpoint(const std::string& dir, ToyLm& model, const nlohmann::json& extra = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["model"] = to_json(model.config());
    manifest["regime"] = to_string(model.config().regime);
    manifest["base_checksum"] = model.base_checksum();
    if (!extra.is_null() && !extra.empty()) manifest["run"] = extra;

    std::vector<unsigned char> blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (Param* p : model.all_params()) {
        auto bytes = detail::to_f32_bytes(p->value);
        tensors.push_back({{"name", p->name},
                           {"shape", p->shape},
                           {"trainable", p->trainable},
                           {"offset", blob.size()},
                           {"byte_len", bytes.size()},
                           {"crc32", crc32(bytes)}});
        blob.insert(blob.end(), bytes.begin(), bytes.end());
    }
    manifest["tensors"] = tensors;
    manifest["total_bytes"] = blob.size();

    const fs::path bin_tmp = fs::path(dir) / "tensors.bin.tmp";
    const fs::path man_tmp = fs::path(dir) / "manifest.json.tmp";
    {
        std::ofstream out(bin_tmp, std::ios::binary);
        if (!out) fail(ErrorKind::io, "trainer", "cannot write checkpoint blob in '" + dir + "'");
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    }
    {
        std::ofstream out(man_tmp);
        if (!out) fail(ErrorKind::io, "trainer", "cannot write checkpoint manifest in '" + dir + "'");
        out << manifest.dump(2) << "\n";
    }
    fs::rename(bin_tmp, fs::path(dir) / "tensors.bin");
    fs::rename(man_tmp, fs::path(dir) / "manifest.json");
}

inline nlohmann::json load_checkpoint_manifest(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "manifest.json");
    if (!in) fail(ErrorKind::io, "trainer", "no manifest.json in '" + dir + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::checkpoint, "trainer", std::string("corrupt manifest: ") + e.what());
    }
    if (manifest.value("format_version", -1) != kCheckpointFormatVersion)
        fail(ErrorKind::checkpoint, "trainer", "unsupported checkpoint format version");
    return manifest;
}

// Rebuilds the model and restores every tensor, verifying shapes and CRCs.
// When expected_regime is given, a checkpoint of any other regime is refused.
inline ToyLm load_checkpoint(const std::string& dir, std::optional<AdapterRegime> expected_regime = std::nullopt) {
    const nlohmann::json manifest = load_checkpoint_manifest(dir);
    ModelConfig config = model_config_from_json(manifest.at("model"));
    if (expected_regime && config.regime != *expected_regime)
        fail(ErrorKind::checkpoint, "trainer",
             std::string("checkpoint regime '") + to_string(config.regime) + "' does not match requested '" +
                 to_string(*expected_regime) + "'");

    std::ifstream in(std::filesystem::path(dir) / "tensors.bin", std::ios::binary);
    if (!in) fail(ErrorKind::io, "trainer", "no tensors.bin in '" + dir + "'");
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() != manifest.value("total_bytes", size_t{0}))
        fail(ErrorKind::checkpoint, "trainer", "checkpoint blob size mismatch (truncated file?)");

    ToyLm model(config, /*seed=*/0);
    std::vector<Param*> params = model.all_params();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        fail(ErrorKind::checkpoint, "trainer", "checkpoint tensor count does not match the model");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& entry = tensors[i];
        Param* p = params[i];
        if (entry.at("name").get<std::string>() != p->name)
            fail(ErrorKind::checkpoint, "trainer", "tensor name mismatch at index " + std::to_string(i));
        if (entry.at("shape").get<Shape>() != p->shape)
            fail(ErrorKind::checkpoint, "trainer", "tensor shape mismatch for " + p->name);
        const size_t offset = entry.at("offset").get<size_t>();
        const size_t byte_len = entry.at("byte_len").get<size_t>();
        if (offset + byte_len > blob.size())
            fail(ErrorKind::checkpoint, "trainer", "tensor range out of bounds for " + p->name);
        std::span<const unsigned char> bytes(blob.data() + offset, byte_len);
        if (crc32(bytes) != entry.at("crc32").get<uint32_t>())
            fail(ErrorKind::checkpoint, "trainer", "checksum failure for " + p->name + "; refusing partial load");
        std::vector<double> values = detail::from_f32_bytes(bytes);
        if (values.size() != p->value.size())
            fail(ErrorKind::checkpoint, "trainer", "value count mismatch for " + p->name);
        p->value = std::move(values);
    }
    return model;
}

} // namespace traitmix

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "traitmix/corpus.hpp"
#include "traitmix/hashing.hpp"
#include "traitmix/lora.hpp"
#include "traitmix/routing.hpp"
#include "traitmix/tensor.hpp"

namespace traitmix {

// ---------------------------------------------------------------------------
// byte-level tokenizer

constexpr int kByteTokens = 256;
constexpr int kBosId = 256;
constexpr int kEosId = 257;
constexpr int kSepId = 258;
constexpr int kPadId = 259;
constexpr size_t kVocabSize = 260;

struct TokenSeq {
    std::vector<int> ids;
    std::vector<bool> discloser_mask; // true on discloser-turn content and its closing separator
};

inline std::vector<int> encode_bytes(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
}

// [BOS, bytes..., EOS]
inline TokenSeq encode(const std::string& text) {
    TokenSeq seq;
    seq.ids.push_back(kBosId);
    for (int id : encode_bytes(text)) seq.ids.push_back(id);
    seq.ids.push_back(kEosId);
    seq.discloser_mask.assign(seq.ids.size(), false);
    return seq;
}

// Inverse of encode on the byte range; special ids are dropped, ids outside
// the vocabulary are an error.
inline std::string decode(std::span<const int> ids) {
    std::string text;
    for (int id : ids) {
        if (id < 0 || static_cast<size_t>(id) >= kVocabSize)
            fail(ErrorKind::domain, "model", "token id " + std::to_string(id) + " out of range");
        if (id < kByteTokens) text += static_cast<char>(id);
    }
    return text;
}

// Token stream of a dialogue: BOS, optional "[code]" trait tag, then each
// turn's bytes closed by SEP (EOS on the final turn). The mask marks
// discloser-turn bytes and their closing separator, which is where the
// language-model loss applies. tag_trait overrides the tag (it defaults to
// the record's own trait); the tag is how the single-adapter baseline is
// conditioned.
inline TokenSeq encode_dialogue(const DialogueRecord& rec, bool with_trait_tag, size_t max_len,
                                std::optional<TraitId> tag_trait = std::nullopt) {
    TokenSeq seq;
    seq.ids.push_back(kBosId);
    seq.discloser_mask.push_back(false);
    if (with_trait_tag) {
        for (int id : encode_bytes("[" + tag_trait.value_or(rec.trait).code() + "]")) {
            seq.ids.push_back(id);
            seq.discloser_mask.push_back(false);
        }
        seq.ids.push_back(kSepId);
        seq.discloser_mask.push_back(false);
    }
    for (size_t t = 0; t < rec.turns.size(); ++t) {
        const bool is_discloser = rec.turns[t].speaker == Speaker::discloser;
        for (int id : encode_bytes(rec.turns[t].text)) {
            seq.ids.push_back(id);
            seq.discloser_mask.push_back(is_discloser);
        }
        seq.ids.push_back(t + 1 == rec.turns.size() ? kEosId : kSepId);
        seq.discloser_mask.push_back(is_discloser);
    }
    if (seq.ids.size() > max_len) {
        seq.ids.resize(max_len);
        seq.discloser_mask.resize(max_len);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// model

enum class AdapterRegime { moe, single_lora, per_trait_lora };

inline const char* to_string(AdapterRegime r) {
    switch (r) {
    case AdapterRegime::moe: return "moe";
    case AdapterRegime::single_lora: return "single_lora";
    case AdapterRegime::per_trait_lora: return "per_trait_lora";
    }
    return "?";
}

inline AdapterRegime parse_regime(const std::string& s) {
    if (s == "moe") return AdapterRegime::moe;
    if (s == "single_lora") return AdapterRegime::single_lora;
    if (s == "per_trait_lora") return AdapterRegime::per_trait_lora;
    fail(ErrorKind::config, "model", "unknown adapter regime '" + s + "'");
}

struct ModelConfig {
    size_t n_layers = 2;
    size_t d_model = 64;
    size_t n_heads = 4;
    size_t ffn_mult = 4;
    size_t context_len = 256;
    AdapterRegime regime = AdapterRegime::moe;
    AdapterConfig adapter;

    size_t head_dim() const { return d_model / n_heads; }
    size_t ffn_dim() const { return d_model * ffn_mult; }

    void validate() const {
        if (n_layers == 0) fail(ErrorKind::config, "model", "n_layers must be >= 1");
        if (n_heads == 0 || d_model % n_heads != 0)
            fail(ErrorKind::config, "model", "d_model must be divisible by n_heads");
        if (context_len < 8) fail(ErrorKind::config, "model", "context_len must be >= 8");
        adapter.validate();
        static const std::vector<std::string> known = {"attn_q", "attn_k", "attn_v", "ffn_in", "ffn_out"};
        for (const std::string& sel : adapter.adapted_matrices)
            if (std::find(known.begin(), known.end(), sel) == known.end())
                fail(ErrorKind::config, "model", "unknown adapted matrix selector '" + sel + "'");
    }
};

// A decoder-only byte transformer with a frozen random base. The only
// trainable state lives in the LoRA experts, the per-layer routers and the
// personality table; which of those exist depends on the adapter regime.
class ToyLm {
public:
    struct Block {
        AdaptedLinear attn_q, attn_k, attn_v;
        Param attn_out;
        AdaptedLinear ffn_in, ffn_out;
    };

    ToyLm(ModelConfig config, uint64_t seed) : cfg_(config) {
        cfg_.validate();
        if (cfg_.regime != AdapterRegime::moe && cfg_.adapter.num_experts != 1)
            fail(ErrorKind::config, "model", "non-mixture regimes use a single expert bank per matrix");
        Rng rng(mix_seed(seed, 0x7079));
        const size_t d = cfg_.d_model;

        token_embed_ = frozen(rng, "token_embed", {kVocabSize, d});
        pos_embed_ = frozen(rng, "pos_embed", {cfg_.context_len, d});
        for (size_t l = 0; l < cfg_.n_layers; ++l) {
            Block block;
            const std::string prefix = "layer" + std::to_string(l) + ".";
            block.attn_q = make_adapted(rng, prefix + "attn_q", d, d);
            block.attn_k = make_adapted(rng, prefix + "attn_k", d, d);
            block.attn_v = make_adapted(rng, prefix + "attn_v", d, d);
            block.attn_out = frozen(rng, prefix + "attn_out", {d, d});
            block.ffn_in = make_adapted(rng, prefix + "ffn_in", cfg_.ffn_dim(), d);
            block.ffn_out = make_adapted(rng, prefix + "ffn_out", d, cfg_.ffn_dim());
            blocks_.push_back(std::move(block));
        }
        // larger head scale: after the final rmsnorm |h| is exactly sqrt(d),
        // so the unembedding row norm bounds the reachable logit range
        unembed_ = frozen(rng, "unembed", {kVocabSize, d}, 0.25);

        if (cfg_.regime == AdapterRegime::moe) {
            table_ = init_personality_table(cfg_.adapter.trait_count, cfg_.adapter.personality_dim, rng);
            const size_t n_routers = cfg_.adapter.shared_router ? 1 : cfg_.n_layers;
            for (size_t r = 0; r < n_routers; ++r)
                routers_.push_back(init_router("router" + std::to_string(r), cfg_.adapter.personality_dim,
                                               cfg_.adapter.num_experts, rng));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    size_t router_count() const { return routers_.size(); }
    Router& router(size_t layer) { return routers_.at(cfg_.adapter.shared_router ? 0 : layer); }
    PersonalityTable& personality_table() {
        if (cfg_.regime != AdapterRegime::moe) fail(ErrorKind::state, "model", "regime has no personality table");
        return *table_;
    }

    // Causal logits [T, vocab] conditioned on the trait via routing (mixture
    // regime) or adapter selection (per-trait regime). The single-adapter
    // regime ignores the trait entirely.
    Tensor forward(Tape& tape, ParamBinding& bind, std::span<const int> ids, TraitId trait) {
        if (ids.empty()) fail(ErrorKind::domain, "model", "empty token sequence");
        if (ids.size() > cfg_.context_len)
            fail(ErrorKind::domain, "model",
                 "sequence length " + std::to_string(ids.size()) + " exceeds context_len " +
                     std::to_string(cfg_.context_len));
        const size_t t_len = ids.size();
        const size_t d = cfg_.d_model;

        std::vector<double> x0(t_len * d);
        for (size_t t = 0; t < t_len; ++t) {
            const int id = ids[t];
            if (id < 0 || static_cast<size_t>(id) >= kVocabSize)
                fail(ErrorKind::domain, "model", "token id out of range: " + std::to_string(id));
            for (size_t j = 0; j < d; ++j)
                x0[t * d + j] = token_embed_.value[static_cast<size_t>(id) * d + j] + pos_embed_.value[t * d + j];
        }
        Tensor x = tape.constant({t_len, d}, std::move(x0));

        for (size_t l = 0; l < cfg_.n_layers; ++l) {
            Block& block = blocks_[l];
            std::optional<Tensor> omega;
            if (cfg_.regime == AdapterRegime::moe) omega = route(bind, *table_, router(l), trait);

            Tensor xn = rmsnorm_rows(x);
            Tensor q = adapted(bind, block.attn_q, xn, omega, trait);
            Tensor k = adapted(bind, block.attn_k, xn, omega, trait);
            Tensor v = adapted(bind, block.attn_v, xn, omega, trait);
            Tensor attn = attention(bind, block, q, k, v);
            x = add(x, attn);

            Tensor xn2 = rmsnorm_rows(x);
            Tensor f = relu(adapted(bind, block.ffn_in, xn2, omega, trait));
            Tensor f2 = adapted(bind, block.ffn_out, f, omega, trait);
            x = add(x, f2);
        }
        return matmul(rmsnorm_rows(x), transpose(bind.use(unembed_)));
    }

    std::vector<double> forward_values(std::span<const int> ids, TraitId trait) {
        Tape tape;
        ParamBinding bind(tape);
        return forward(tape, bind, ids, trait).values();
    }

    // Greedy (temperature 0) or seeded categorical sampling; stops at EOS or
    // after max_new tokens. Returns only the newly generated text.
    std::string generate(const std::string& prompt, TraitId trait, size_t max_new, double temperature, uint64_t seed) {
        if (max_new < 1) fail(ErrorKind::domain, "model", "max_new must be >= 1");
        if (temperature < 0.0) fail(ErrorKind::domain, "model", "temperature must be nonnegative");
        std::vector<int> ids;
        ids.push_back(kBosId);
        for (int id : encode_bytes(prompt)) ids.push_back(id);
        if (ids.size() >= cfg_.context_len) fail(ErrorKind::domain, "model", "prompt exceeds context_len");
        Rng rng(mix_seed(seed, 0x67656e));
        const size_t prompt_len = ids.size();
        std::vector<int> fresh;
        while (fresh.size() < max_new && ids.size() < cfg_.context_len) {
            const std::vector<double> logits = forward_values(ids, trait);
            const size_t t_last = ids.size() - 1;
            std::span<const double> row(logits.data() + t_last * kVocabSize, kVocabSize);
            int next;
            if (temperature == 0.0) {
                next = 0;
                for (size_t j = 1; j < kVocabSize; ++j)
                    if (row[j] > row[next]) next = static_cast<int>(j);
            } else {
                std::vector<double> probs(kVocabSize);
                double mx = row[0];
                for (double v : row) mx = std::max(mx, v);
                for (size_t j = 0; j < kVocabSize; ++j) probs[j] = std::exp((row[j] - mx) / temperature);
                next = static_cast<int>(rng.categorical(probs));
            }
            if (next == kEosId) break;
            ids.push_back(next);
            fresh.push_back(next);
        }
        (void)prompt_len;
        return decode(fresh);
    }

    // Parameter sets. Trainable: experts, routers, personality table. The
    // base transformer is permanently frozen.
    std::vector<Param*> trainable_params() {
        std::vector<Param*> out;
        for (Block& b : blocks_)
            for (AdaptedLinear* lin : {&b.attn_q, &b.attn_k, &b.attn_v, &b.ffn_in, &b.ffn_out})
                for (LoraExpert& e : lin->experts) {
                    out.push_back(&e.a);
                    out.push_back(&e.b);
                }
        if (table_) out.push_back(&table_->table);
        for (Router& r : routers_) out.push_back(&r.gate);
        return out;
    }

    std::vector<Param*> base_params() {
        std::vector<Param*> out = {&token_embed_, &pos_embed_, &unembed_};
        for (Block& b : blocks_) {
            out.push_back(&b.attn_q.weight);
            out.push_back(&b.attn_k.weight);
            out.push_back(&b.attn_v.weight);
            out.push_back(&b.attn_out);
            out.push_back(&b.ffn_in.weight);
            out.push_back(&b.ffn_out.weight);
        }
        return out;
    }

    std::vector<Param*> all_params() {
        std::vector<Param*> out = base_params();
        for (Param* p : trainable_params()) out.push_back(p);
        return out;
    }

    uint64_t base_checksum() {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (Param* p : base_params()) {
            h = fnv1a64(p->name, h);
            h = fnv1a64(std::span<const double>(p->value), h);
        }
        return h;
    }

    // Adapted layer dimensions, for parameter-parity accounting.
    std::vector<std::pair<size_t, size_t>> adapted_layer_dims() const {
        std::vector<std::pair<size_t, size_t>> dims;
        for (size_t l = 0; l < cfg_.n_layers; ++l)
            for (const std::string& sel : cfg_.adapter.adapted_matrices) {
                if (sel == "ffn_in")
                    dims.emplace_back(cfg_.d_model, cfg_.ffn_dim());
                else if (sel == "ffn_out")
                    dims.emplace_back(cfg_.ffn_dim(), cfg_.d_model);
                else
                    dims.emplace_back(cfg_.d_model, cfg_.d_model);
            }
        return dims;
    }

    std::vector<Block>& blocks() { return blocks_; }

private:
    Param frozen(Rng& rng, const std::string& name, Shape shape, double stddev = 0.08) {
        std::vector<double> v(numel(shape));
        for (double& x : v) x = rng.normal(0.0, stddev);
        return Param(name, std::move(shape), std::move(v), false);
    }

    bool is_selected(const std::string& short_name) const {
        const auto& sel = cfg_.adapter.adapted_matrices;
        return std::find(sel.begin(), sel.end(), short_name) != sel.end();
    }

    AdaptedLinear make_adapted(Rng& rng, const std::string& name, size_t d_out, size_t d_in) {
        Param w = frozen(rng, name, {d_out, d_in});
        const std::string short_name = name.substr(name.find('.') + 1);
        if (!is_selected(short_name)) {
            AdaptedLinear plain;
            plain.name = name;
            plain.d_out = d_out;
            plain.d_in = d_in;
            plain.alpha = cfg_.adapter.alpha;
            plain.total_rank = cfg_.adapter.total_rank;
            plain.weight = std::move(w);
            return plain; // no experts: base path only
        }
        switch (cfg_.regime) {
        case AdapterRegime::moe:
            return init_adapted_linear(name, std::move(w), cfg_.adapter.num_experts, cfg_.adapter.total_rank,
                                       cfg_.adapter.alpha, rng);
        case AdapterRegime::single_lora:
            return init_adapted_linear(name, std::move(w), 1, cfg_.adapter.total_rank, cfg_.adapter.alpha, rng);
        case AdapterRegime::per_trait_lora:
            return init_adapted_linear_full_rank(name, std::move(w), cfg_.adapter.trait_count,
                                                 cfg_.adapter.total_rank, cfg_.adapter.alpha, rng);
        }
        fail(ErrorKind::state, "model", "unreachable");
    }

    Tensor adapted(ParamBinding& bind, AdaptedLinear& lin, const Tensor& x, const std::optional<Tensor>& omega,
                   TraitId trait) {
        if (lin.experts.empty()) return base_forward(bind, lin, x);
        switch (cfg_.regime) {
        case AdapterRegime::moe: return moe_lora_forward(bind, lin, x, *omega);
        case AdapterRegime::single_lora: return lora_forward(bind, lin, x, 0);
        case AdapterRegime::per_trait_lora: return lora_forward(bind, lin, x, trait.index());
        }
        fail(ErrorKind::state, "model", "unreachable");
    }

    Tensor attention(ParamBinding& bind, Block& block, const Tensor& q, const Tensor& k, const Tensor& v) {
        const size_t heads = cfg_.n_heads;
        const size_t hd = cfg_.head_dim();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<Tensor> outs;
        outs.reserve(heads);
        for (size_t h = 0; h < heads; ++h) {
            Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
            Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
            Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
            Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
            outs.push_back(matmul(causal_softmax_rows(scores), vh));
        }
        return matmul(concat_cols(outs), transpose(bind.use(block.attn_out)));
    }

    ModelConfig cfg_;
    Param token_embed_, pos_embed_, unembed_;
    std::vector<Block> blocks_;
    std::optional<PersonalityTable> table_;
    std::vector<Router> routers_;
};

// Masked language-model loss of one dialogue record: mean cross entropy of
// next-token prediction over discloser-turn targets.
inline Tensor dialogue_lm_loss(Tape& tape, ParamBinding& bind, ToyLm& model, const DialogueRecord& rec, TraitId trait,
                               size_t max_len) {
    const bool tag = model.config().regime == AdapterRegime::single_lora;
    TokenSeq seq = encode_dialogue(rec, tag, std::min(max_len, model.config().context_len), trait);
    if (seq.ids.size() < 2) fail(ErrorKind::domain, "model", "dialogue too short after truncation");
    std::span<const int> inputs(seq.ids.data(), seq.ids.size() - 1);
    std::vector<int> targets(seq.ids.begin() + 1, seq.ids.end());
    std::vector<bool> mask(seq.discloser_mask.begin() + 1, seq.discloser_mask.end());
    Tensor logits = model.forward(tape, bind, inputs, trait);
    return cross_entropy(logits, targets, mask);
}

// True when the record still has at least one discloser target after
// truncation; records failing this are skipped by training/eval loops.
inline bool has_discloser_targets(const DialogueRecord& rec, bool with_tag, size_t max_len) {
    TokenSeq seq = encode_dialogue(rec, with_tag, max_len);
    for (size_t i = 1; i < seq.discloser_mask.size(); ++i)
        if (seq.discloser_mask[i]) return true;
    return false;
}

} // namespace traitmix

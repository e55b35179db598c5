#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "traitmix/model.hpp"

using namespace traitmix;

namespace {

ModelConfig tiny_config(AdapterRegime regime = AdapterRegime::moe) {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.context_len = 64;
    cfg.regime = regime;
    cfg.adapter.num_experts = regime == AdapterRegime::moe ? 2 : 1;
    cfg.adapter.total_rank = 4;
    cfg.adapter.alpha = 4.0;
    cfg.adapter.personality_dim = 4;
    return cfg;
}

void randomize_experts(ToyLm& model, uint64_t seed) {
    Rng rng(seed);
    for (auto& block : model.blocks())
        for (AdaptedLinear* lin : {&block.attn_q, &block.attn_k, &block.attn_v, &block.ffn_in, &block.ffn_out})
            for (LoraExpert& e : lin->experts)
                for (double& x : e.b.value) x = rng.normal(0.0, 0.1);
}

} // namespace

TEST_CASE("encode wraps text in BOS/EOS", "[model]") {
    TokenSeq empty = encode("");
    REQUIRE(empty.ids == std::vector<int>{kBosId, kEosId});
    TokenSeq ab = encode("ab");
    REQUIRE(ab.ids == std::vector<int>{kBosId, 97, 98, kEosId});
}

TEST_CASE("encode/decode round-trips random byte strings", "[model]") {
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string text;
        const size_t len = rng.below(40);
        for (size_t i = 0; i < len; ++i) text += static_cast<char>(rng.below(256));
        TokenSeq seq = encode(text);
        REQUIRE(decode(seq.ids) == text);
    }
}

TEST_CASE("decode rejects out-of-range ids", "[model]") {
    REQUIRE_THROWS_AS(decode(std::vector<int>{97, 260}), Error);
    REQUIRE_THROWS_AS(decode(std::vector<int>{-1}), Error);
}

TEST_CASE("dialogue encoding masks discloser turns and their separators", "[model]") {
    DialogueRecord rec{TraitId::parse("N+"), "t",
                       {{Speaker::questioner, "hi"}, {Speaker::discloser, "ok"},
                        {Speaker::questioner, "and"}, {Speaker::discloser, "no"}}};
    TokenSeq seq = encode_dialogue(rec, false, 256);
    // BOS hi SEP ok SEP and SEP no EOS
    REQUIRE(seq.ids.size() == 1 + 3 + 3 + 4 + 3);
    REQUIRE(seq.ids.front() == kBosId);
    REQUIRE(seq.ids.back() == kEosId);
    size_t masked = 0;
    for (size_t i = 0; i < seq.ids.size(); ++i) masked += seq.discloser_mask[i] ? 1 : 0;
    REQUIRE(masked == 6); // "ok" + SEP and "no" + EOS

    TokenSeq tagged = encode_dialogue(rec, true, 256);
    REQUIRE(tagged.ids.size() == seq.ids.size() + 5); // "[N+]" + SEP
    REQUIRE(decode(tagged.ids).substr(0, 4) == "[N+]");
}

TEST_CASE("fresh adapters give trait-independent outputs", "[model]") {
    ToyLm model(tiny_config(), 101);
    TokenSeq seq = encode("hello there");
    auto base = model.forward_values(seq.ids, TraitId::parse("O+"));
    for (const TraitId& trait : TraitId::all())
        REQUIRE(model.forward_values(seq.ids, trait) == base);
}

TEST_CASE("trained-like adapters depend on the trait, zeroed ones do not", "[model]") {
    ToyLm model(tiny_config(), 102);
    randomize_experts(model, 7);
    TokenSeq seq = encode("steady text");
    auto a = model.forward_values(seq.ids, TraitId::parse("O+"));
    auto b = model.forward_values(seq.ids, TraitId::parse("N-"));
    REQUIRE(testsup::max_abs_diff(a, b) > 0.0);

    // zeroing the adapters removes every trait-dependent contribution
    for (auto& block : model.blocks())
        for (AdaptedLinear* lin : {&block.attn_q, &block.attn_k, &block.attn_v, &block.ffn_in, &block.ffn_out})
            for (LoraExpert& e : lin->experts) std::fill(e.b.value.begin(), e.b.value.end(), 0.0);
    auto za = model.forward_values(seq.ids, TraitId::parse("O+"));
    auto zb = model.forward_values(seq.ids, TraitId::parse("N-"));
    REQUIRE(za == zb);
}

TEST_CASE("logits are causal", "[model]") {
    ToyLm model(tiny_config(), 103);
    randomize_experts(model, 9);
    const TraitId trait = TraitId::parse("E+");

    TokenSeq seq = encode("causality");
    auto full = model.forward_values(seq.ids, trait);

    // appending a token leaves earlier rows unchanged
    std::vector<int> longer = seq.ids;
    longer.push_back(107);
    auto extended = model.forward_values(longer, trait);
    double max_diff = 0.0;
    for (size_t i = 0; i < seq.ids.size() * kVocabSize; ++i)
        max_diff = std::max(max_diff, std::fabs(full[i] - extended[i]));
    REQUIRE(max_diff <= 1e-10);

    // perturbing a future token never changes past logits
    std::vector<int> perturbed = seq.ids;
    const size_t cut = 4;
    for (size_t i = cut + 1; i < perturbed.size(); ++i) perturbed[i] = 120;
    auto pert = model.forward_values(perturbed, trait);
    for (size_t i = 0; i <= cut * kVocabSize; ++i) REQUIRE(full[i] == Catch::Approx(pert[i]).margin(1e-12));
}

TEST_CASE("over-long sequences are rejected", "[model]") {
    ToyLm model(tiny_config(), 104);
    std::vector<int> ids(model.config().context_len + 1, 65);
    REQUIRE_THROWS_AS(model.forward_values(ids, TraitId::parse("O+")), Error);
}

TEST_CASE("model construction is deterministic under the seed", "[model]") {
    ToyLm a(tiny_config(), 55);
    ToyLm b(tiny_config(), 55);
    ToyLm c(tiny_config(), 56);
    REQUIRE(a.base_checksum() == b.base_checksum());
    REQUIRE(a.base_checksum() != c.base_checksum());
    TokenSeq seq = encode("det");
    REQUIRE(a.forward_values(seq.ids, TraitId::parse("A-")) == b.forward_values(seq.ids, TraitId::parse("A-")));
}

TEST_CASE("greedy generation is deterministic and bounded", "[model]") {
    ToyLm model(tiny_config(), 105);
    randomize_experts(model, 21);
    const TraitId trait = TraitId::parse("C+");
    std::string g1 = model.generate("abc", trait, 8, 0.0, 1);
    std::string g2 = model.generate("abc", trait, 8, 0.0, 2); // seed ignored at temperature 0
    REQUIRE(g1 == g2);
    REQUIRE(g1.size() <= 8);

    std::string one = model.generate("abc", trait, 1, 0.0, 3);
    REQUIRE(one.size() <= 1);

    std::string s1 = model.generate("abc", trait, 8, 1.0, 42);
    std::string s2 = model.generate("abc", trait, 8, 1.0, 42);
    REQUIRE(s1 == s2);
}

TEST_CASE("generation validates its arguments", "[model]") {
    ToyLm model(tiny_config(), 106);
    REQUIRE_THROWS_AS(model.generate("x", TraitId::parse("O+"), 0, 0.0, 1), Error);
    REQUIRE_THROWS_AS(model.generate("x", TraitId::parse("O+"), 4, -0.5, 1), Error);
    std::string huge(model.config().context_len + 4, 'a');
    REQUIRE_THROWS_AS(model.generate(huge, TraitId::parse("O+"), 4, 0.0, 1), Error);
}

TEST_CASE("single-adapter regime ignores the trait id", "[model]") {
    ToyLm model(tiny_config(AdapterRegime::single_lora), 107);
    randomize_experts(model, 31);
    TokenSeq seq = encode("same for all");
    auto base = model.forward_values(seq.ids, TraitId::parse("O+"));
    for (const TraitId& trait : TraitId::all()) REQUIRE(model.forward_values(seq.ids, trait) == base);
}

TEST_CASE("per-trait regime selects a distinct adapter per trait", "[model]") {
    ToyLm model(tiny_config(AdapterRegime::per_trait_lora), 108);
    randomize_experts(model, 41);
    TokenSeq seq = encode("pick me");
    auto a = model.forward_values(seq.ids, TraitId::parse("O+"));
    auto b = model.forward_values(seq.ids, TraitId::parse("O-"));
    REQUIRE(testsup::max_abs_diff(a, b) > 0.0);
}

TEST_CASE("dialogue lm loss is finite and mask-driven", "[model]") {
    ToyLm model(tiny_config(), 109);
    DialogueRecord rec{TraitId::parse("N+"), "t",
                       {{Speaker::questioner, "why"}, {Speaker::discloser, "because of reasons"}}};
    Tape tape;
    ParamBinding bind(tape);
    Tensor loss = dialogue_lm_loss(tape, bind, model, rec, rec.trait, 64);
    REQUIRE(std::isfinite(loss.scalar()));
    REQUIRE(loss.scalar() > 0.0);
    REQUIRE(has_discloser_targets(rec, false, 64));
    REQUIRE_FALSE(has_discloser_targets(rec, false, 5)); // truncated before the discloser turn
}

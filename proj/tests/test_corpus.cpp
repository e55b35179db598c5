#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "traitmix/corpus.hpp"

using namespace traitmix;

namespace {

const std::string kFixtures = std::string(TRAITMIX_TEST_DIR) + "/fixtures";

std::string temp_path(const std::string& stem) {
    return (std::filesystem::temp_directory_path() / (stem + "-" + std::to_string(::getpid()) + ".jsonl")).string();
}

} // namespace

TEST_CASE("loading an empty file yields an empty list", "[corpus]") {
    LoadResult r = load_dialogues(kFixtures + "/empty.jsonl");
    REQUIRE(r.records.empty());
    REQUIRE(r.errors.empty());
}

TEST_CASE("bad lines are rejected with their location", "[corpus]") {
    LoadResult r = load_dialogues(kFixtures + "/dialogues_mixed.jsonl");
    REQUIRE(r.records.size() == 3);
    REQUIRE(r.errors.size() == 1);
    REQUIRE(r.errors[0].line == 4); // discloser speaks first on line 4
    REQUIRE_THROWS_AS(load_dialogues_strict(kFixtures + "/dialogues_mixed.jsonl"), Error);
}

TEST_CASE("unknown trait codes and non-alternating speakers are structured errors", "[corpus]") {
    const std::string path = temp_path("traitmix-badlines");
    {
        std::ofstream out(path);
        out << R"({"trait":"X+","topic":"t","turns":[{"speaker":"questioner","text":"a"},{"speaker":"discloser","text":"b"}]})"
            << "\n";
        out << "not json at all\n";
        out << R"({"trait":"A-","topic":"t","turns":[{"speaker":"questioner","text":"a"},{"speaker":"questioner","text":"b"}]})"
            << "\n";
        out << R"({"trait":"A-","topic":"t","turns":[{"speaker":"questioner","text":"a"},{"speaker":"discloser","text":"b"}]})"
            << "\n";
    }
    LoadResult r = load_dialogues(path);
    std::remove(path.c_str());
    REQUIRE(r.records.size() == 1);
    REQUIRE(r.errors.size() == 3);
    REQUIRE(r.errors[0].line == 1);
    REQUIRE(r.errors[1].line == 2);
    REQUIRE(r.errors[2].line == 3);
}

TEST_CASE("synthetic corpus round-trips through the jsonl format", "[corpus]") {
    auto records = synth_corpus(StyleSpec::synthetic_default(), 50, 99); // 500 records
    const std::string path = temp_path("traitmix-roundtrip");
    write_dialogues(path, records);
    LoadResult r = load_dialogues(path);
    std::remove(path.c_str());
    REQUIRE(r.errors.empty());
    REQUIRE(r.records == records);
}

TEST_CASE("stats of a single dialogue are exact", "[corpus]") {
    DialogueRecord rec{TraitId::parse("O+"), "t", {}};
    for (int i = 0; i < 4; ++i)
        rec.turns.push_back({i % 2 == 0 ? Speaker::questioner : Speaker::discloser, "one two three"});
    CorpusStats stats = corpus_stats({rec});
    REQUIRE(stats.per_trait[0].dialogue_count == 1);
    REQUIRE(stats.per_trait[0].avg_turns == 4.0);
    REQUIRE(stats.per_trait[0].avg_words_per_turn == 3.0);
    REQUIRE(stats.overall_avg_turns == 4.0);
    REQUIRE(stats.overall_avg_words_per_turn == 3.0);
}

TEST_CASE("overall averages are dialogue-count weighted", "[corpus]") {
    std::vector<DialogueRecord> records;
    auto add_records = [&](const char* code, size_t count, size_t turns) {
        for (size_t k = 0; k < count; ++k) {
            DialogueRecord rec{TraitId::parse(code), "t", {}};
            for (size_t i = 0; i < turns; ++i)
                rec.turns.push_back({i % 2 == 0 ? Speaker::questioner : Speaker::discloser, "w"});
            records.push_back(rec);
        }
    };
    add_records("O+", 2, 5);
    add_records("C+", 6, 10);
    CorpusStats stats = corpus_stats(records);
    REQUIRE(stats.overall_avg_turns == Catch::Approx((2.0 * 5 + 6.0 * 10) / 8.0).margin(1e-12));
    REQUIRE(stats.overall_avg_turns == Catch::Approx(8.75).margin(1e-12));
}

TEST_CASE("stats are permutation invariant and match a recount oracle", "[corpus]") {
    auto records = synth_corpus(StyleSpec::synthetic_default(), 100, 7); // 1000 records
    const std::string path = temp_path("traitmix-recount");
    write_dialogues(path, records);

    CorpusStats stats = corpus_stats(records);

    // independent recount straight off the raw file
    std::ifstream in(path);
    std::string line;
    std::array<size_t, kTraitCount> dialogues{}, turns{}, words{};
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        const size_t ti = TraitId::parse(j["trait"].get<std::string>()).index();
        dialogues[ti] += 1;
        for (const auto& t : j["turns"]) {
            turns[ti] += 1;
            std::istringstream ss(t["text"].get<std::string>());
            std::string tok;
            while (ss >> tok) words[ti] += 1;
        }
    }
    std::remove(path.c_str());
    for (size_t i = 0; i < kTraitCount; ++i) {
        REQUIRE(stats.per_trait[i].dialogue_count == dialogues[i]);
        REQUIRE(stats.per_trait[i].avg_turns ==
                Catch::Approx((double)turns[i] / (double)dialogues[i]).margin(1e-12));
        REQUIRE(stats.per_trait[i].avg_words_per_turn ==
                Catch::Approx((double)words[i] / (double)turns[i]).margin(1e-12));
    }

    auto shuffled = records;
    Rng rng(555);
    rng.shuffle(shuffled);
    CorpusStats stats2 = corpus_stats(shuffled);
    for (size_t i = 0; i < kTraitCount; ++i) {
        REQUIRE(stats.per_trait[i].dialogue_count == stats2.per_trait[i].dialogue_count);
        REQUIRE(stats.per_trait[i].avg_turns == stats2.per_trait[i].avg_turns);
        REQUIRE(stats.per_trait[i].avg_words_per_turn == stats2.per_trait[i].avg_words_per_turn);
    }
}

TEST_CASE("stats reject an empty corpus", "[corpus]") { REQUIRE_THROWS_AS(corpus_stats({}), Error); }

TEST_CASE("default styles are mutually distinguishable", "[corpus]") {
    StyleSpec spec = StyleSpec::synthetic_default();
    for (size_t i = 0; i < kTraitCount; ++i)
        for (size_t j = i + 1; j < kTraitCount; ++j)
            REQUIRE(total_variation(spec.trait_styles[i].unigram, spec.trait_styles[j].unigram) >= 0.3);

    // too-close styles are rejected at construction
    StyleSpec bad = spec;
    bad.trait_styles[1] = bad.trait_styles[0];
    REQUIRE_THROWS_AS(bad.validate(), Error);

    StyleSpec degenerate = spec;
    degenerate.trait_styles[2].unigram.assign(kStyleAlphabetSize, 0.0);
    REQUIRE_THROWS_AS(degenerate.validate(), Error);
}

TEST_CASE("synthesis is deterministic under the seed", "[corpus]") {
    StyleSpec spec = StyleSpec::synthetic_default();
    auto a = synth_corpus(spec, 5, 42);
    auto b = synth_corpus(spec, 5, 42);
    auto c = synth_corpus(spec, 5, 43);
    REQUIRE(a == b);
    REQUIRE(a != c);
}

TEST_CASE("discloser unigrams converge to their style spec", "[corpus]") {
    StyleSpec spec = StyleSpec::synthetic_default();
    auto records = synth_corpus(spec, 500, 11);
    std::array<std::string, kTraitCount> pooled;
    for (const DialogueRecord& rec : records) pooled[rec.trait.index()] += discloser_text(rec) + " ";
    for (size_t i = 0; i < kTraitCount; ++i) {
        auto dist = empirical_unigram(pooled[i]);
        REQUIRE(dist.has_value());
        REQUIRE(total_variation(*dist, spec.trait_styles[i].unigram) <= 0.05);
    }
}

TEST_CASE("nearest-style classification recovers the generating trait", "[corpus]") {
    StyleSpec spec = StyleSpec::synthetic_default();
    auto records = synth_corpus(spec, 50, 13);
    size_t correct = 0;
    for (const DialogueRecord& rec : records)
        if (classify_by_style(discloser_text(rec), spec) == rec.trait) ++correct;
    REQUIRE(static_cast<double>(correct) / static_cast<double>(records.size()) >= 0.95);
}

TEST_CASE("split is stratified, exact and deterministic", "[corpus]") {
    auto records = synth_corpus(StyleSpec::synthetic_default(), 10, 3);
    SplitResult sr = split(records, 0.5, 77);
    std::array<size_t, kTraitCount> train_counts{}, eval_counts{};
    for (const auto& r : sr.train) train_counts[r.trait.index()] += 1;
    for (const auto& r : sr.eval) eval_counts[r.trait.index()] += 1;
    for (size_t i = 0; i < kTraitCount; ++i) {
        REQUIRE(train_counts[i] == 5);
        REQUIRE(eval_counts[i] == 5);
    }

    // union equals the input set
    auto key = [](const DialogueRecord& r) { return to_json(r).dump(); };
    std::multiset<std::string> original, combined;
    for (const auto& r : records) original.insert(key(r));
    for (const auto& r : sr.train) combined.insert(key(r));
    for (const auto& r : sr.eval) combined.insert(key(r));
    REQUIRE(original == combined);

    SplitResult sr2 = split(records, 0.5, 77);
    REQUIRE(sr.train == sr2.train);
    REQUIRE(sr.eval == sr2.eval);

    SplitResult sr3 = split(records, 0.5, 78);
    std::multiset<std::string> eval_a, eval_b;
    for (const auto& r : sr.eval) eval_a.insert(key(r));
    for (const auto& r : sr3.eval) eval_b.insert(key(r));
    REQUIRE(eval_a != eval_b);
    REQUIRE(sr3.eval.size() == sr.eval.size());
}

TEST_CASE("split rejects traits with fewer than two records", "[corpus]") {
    auto records = synth_corpus(StyleSpec::synthetic_default(), 2, 5);
    records.push_back(records.back());
    records.back().trait = TraitId::parse("O+"); // fine, O+ now has 3
    std::vector<DialogueRecord> tiny = {records[0]};
    tiny[0].trait = TraitId::parse("N-");
    REQUIRE_THROWS_AS(split(tiny, 0.5, 1), Error);
    REQUIRE_THROWS_AS(split(records, 0.0, 1), Error);
    REQUIRE_THROWS_AS(split(records, 1.0, 1), Error);
}

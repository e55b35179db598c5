#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "traitmix/error.hpp"
#include "traitmix/rng.hpp"
#include "traitmix/trait.hpp"

namespace traitmix {

enum class Speaker { questioner, discloser };

inline const char* to_string(Speaker s) { return s == Speaker::questioner ? "questioner" : "discloser"; }

inline Speaker parse_speaker(const std::string& s) {
    if (s == "questioner") return Speaker::questioner;
    if (s == "discloser") return Speaker::discloser;
    fail(ErrorKind::parse, "corpus", "unknown speaker '" + s + "'");
}

struct DialogueTurn {
    Speaker speaker;
    std::string text;

    bool operator==(const DialogueTurn&) const = default;
};

// A trait-labeled multi-turn exchange. The questioner opens and the two
// speakers strictly alternate.
struct DialogueRecord {
    TraitId trait;
    std::string topic;
    std::vector<DialogueTurn> turns;

    bool operator==(const DialogueRecord&) const = default;

    void validate() const {
        if (turns.size() < 2) fail(ErrorKind::parse, "corpus", "dialogue has fewer than 2 turns");
        if (turns.front().speaker != Speaker::questioner)
            fail(ErrorKind::parse, "corpus", "first speaker must be the questioner");
        for (size_t i = 1; i < turns.size(); ++i)
            if (turns[i].speaker == turns[i - 1].speaker)
                fail(ErrorKind::parse, "corpus", "speakers must alternate (violated at turn " + std::to_string(i + 1) + ")");
    }
};

// ---------------------------------------------------------------------------
// JSON-lines serialization

inline nlohmann::json to_json(const DialogueRecord& rec) {
    nlohmann::json turns = nlohmann::json::array();
    for (const DialogueTurn& t : rec.turns) turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
    return {{"trait", rec.trait.code()}, {"topic", rec.topic}, {"turns", turns}};
}

inline DialogueRecord dialogue_from_json(const nlohmann::json& j) {
    DialogueRecord rec;
    rec.trait = TraitId::parse(j.at("trait").get<std::string>());
    rec.topic = j.value("topic", "");
    for (const auto& t : j.at("turns"))
        rec.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    rec.validate();
    return rec;
}

struct LineError {
    size_t line;
    std::string message;
};

struct LoadResult {
    std::vector<DialogueRecord> records;
    std::vector<LineError> errors;
};

// Reads a JSON-lines dialogue file. Bad lines are collected with their line
// numbers instead of aborting the whole load.
inline LoadResult load_dialogues(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "corpus", "cannot open '" + path + "'");
    LoadResult out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.records.push_back(dialogue_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            out.errors.push_back({line_no, e.what()});
        } catch (const Error& e) {
            out.errors.push_back({line_no, e.what()});
        }
    }
    return out;
}

// Strict variant used where a partially-bad file must not pass silently.
inline std::vector<DialogueRecord> load_dialogues_strict(const std::string& path) {
    LoadResult r = load_dialogues(path);
    if (!r.errors.empty())
        fail(ErrorKind::parse, "corpus",
             path + ": line " + std::to_string(r.errors.front().line) + ": " + r.errors.front().message);
    return std::move(r.records);
}

inline void write_dialogues(const std::string& path, const std::vector<DialogueRecord>& records) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "corpus", "cannot write '" + path + "'");
    for (const DialogueRecord& rec : records) out << to_json(rec).dump() << "\n";
}

// ---------------------------------------------------------------------------
// statistics

inline size_t word_count(const std::string& text) {
    std::istringstream ss(text);
    std::string tok;
    size_t n = 0;
    while (ss >> tok) ++n;
    return n;
}

struct TraitStats {
    size_t dialogue_count = 0;
    double avg_turns = 0.0;
    double avg_words_per_turn = 0.0;
};

struct CorpusStats {
    std::array<TraitStats, kTraitCount> per_trait;
    size_t total_dialogues = 0;
    double overall_avg_turns = 0.0;
    double overall_avg_words_per_turn = 0.0;
};

// Per-trait dialogue counts, mean turns per dialogue and mean words per turn,
// plus dialogue-count-weighted overall averages.
inline CorpusStats corpus_stats(const std::vector<DialogueRecord>& records) {
    if (records.empty()) fail(ErrorKind::domain, "corpus", "corpus_stats on an empty corpus");
    std::array<size_t, kTraitCount> turns{};
    std::array<size_t, kTraitCount> words{};
    CorpusStats stats;
    for (const DialogueRecord& rec : records) {
        const size_t i = rec.trait.index();
        stats.per_trait[i].dialogue_count += 1;
        turns[i] += rec.turns.size();
        for (const DialogueTurn& t : rec.turns) words[i] += word_count(t.text);
    }
    double weighted_turns = 0.0, weighted_words = 0.0;
    for (size_t i = 0; i < kTraitCount; ++i) {
        TraitStats& ts = stats.per_trait[i];
        if (ts.dialogue_count > 0) {
            ts.avg_turns = static_cast<double>(turns[i]) / static_cast<double>(ts.dialogue_count);
            ts.avg_words_per_turn = static_cast<double>(words[i]) / static_cast<double>(turns[i]);
        }
        stats.total_dialogues += ts.dialogue_count;
        weighted_turns += static_cast<double>(ts.dialogue_count) * ts.avg_turns;
        weighted_words += static_cast<double>(ts.dialogue_count) * ts.avg_words_per_turn;
    }
    stats.overall_avg_turns = weighted_turns / static_cast<double>(stats.total_dialogues);
    stats.overall_avg_words_per_turn = weighted_words / static_cast<double>(stats.total_dialogues);
    return stats;
}

inline nlohmann::json to_json(const CorpusStats& stats) {
    nlohmann::json per_trait = nlohmann::json::object();
    for (size_t i = 0; i < kTraitCount; ++i) {
        const TraitStats& ts = stats.per_trait[i];
        per_trait[TraitId::from_index(i).code()] = {{"dialogues", ts.dialogue_count},
                                                    {"avg_turns", ts.avg_turns},
                                                    {"avg_words_per_turn", ts.avg_words_per_turn}};
    }
    return {{"per_trait", per_trait},
            {"total_dialogues", stats.total_dialogues},
            {"overall_avg_turns", stats.overall_avg_turns},
            {"overall_avg_words_per_turn", stats.overall_avg_words_per_turn}};
}

inline std::string format_stats_table(const CorpusStats& stats) {
    std::ostringstream out;
    char buf[96];
    out << "Trait  Dialogues  Avg. Turns  Words / Turn\n";
    for (size_t i = 0; i < kTraitCount; ++i) {
        const TraitStats& ts = stats.per_trait[i];
        std::snprintf(buf, sizeof(buf), "%-5s  %9zu  %10.2f  %12.2f\n", TraitId::from_index(i).code().c_str(),
                      ts.dialogue_count, ts.avg_turns, ts.avg_words_per_turn);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-5s  %9zu  %10.2f  %12.2f\n", "Avg", stats.total_dialogues,
                  stats.overall_avg_turns, stats.overall_avg_words_per_turn);
    out << buf;
    return out.str();
}

// ---------------------------------------------------------------------------
// synthetic trait styles

constexpr std::string_view kStyleAlphabet = "abcdefghijklmnopqrstuvwxyz!?.,;:";
constexpr size_t kStyleAlphabetSize = 32;

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    double tv = 0.0;
    for (size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
    return 0.5 * tv;
}

// Unigram distribution of a text over the style alphabet; characters outside
// the alphabet are ignored. Returns nullopt when nothing matched.
inline std::optional<std::vector<double>> empirical_unigram(const std::string& text) {
    std::vector<double> counts(kStyleAlphabetSize, 0.0);
    double total = 0.0;
    for (char c : text) {
        const size_t pos = kStyleAlphabet.find(c);
        if (pos == std::string_view::npos) continue;
        counts[pos] += 1.0;
        total += 1.0;
    }
    if (total == 0.0) return std::nullopt;
    for (double& v : counts) v /= total;
    return counts;
}

struct TraitStyle {
    std::vector<double> unigram;     // over kStyleAlphabet
    double mean_words_per_turn = 4.0; // turn length parameter
};

// Per-trait token distributions over a 32-symbol alphabet. Construction
// enforces mutual distinguishability (pairwise TV >= 0.3) so style-matching
// oracles downstream are well-posed.
struct StyleSpec {
    std::array<TraitStyle, kTraitCount> trait_styles;
    TraitStyle neutral; // questioner style
    size_t min_turn_pairs = 2;
    size_t max_turn_pairs = 3;

    void validate() const {
        auto check_dist = [](const TraitStyle& s, const std::string& who) {
            if (s.unigram.size() != kStyleAlphabetSize)
                fail(ErrorKind::config, "corpus", who + ": unigram must cover the 32-symbol alphabet");
            double total = 0.0;
            for (double p : s.unigram) {
                if (p < 0.0) fail(ErrorKind::config, "corpus", who + ": negative probability");
                total += p;
            }
            if (std::fabs(total - 1.0) > 1e-9 || total == 0.0)
                fail(ErrorKind::config, "corpus", who + ": degenerate distribution (sum " + std::to_string(total) + ")");
            if (s.mean_words_per_turn < 1.0) fail(ErrorKind::config, "corpus", who + ": mean words per turn < 1");
        };
        for (size_t i = 0; i < kTraitCount; ++i) check_dist(trait_styles[i], TraitId::from_index(i).code());
        check_dist(neutral, "neutral");
        for (size_t i = 0; i < kTraitCount; ++i)
            for (size_t j = i + 1; j < kTraitCount; ++j) {
                const double tv = total_variation(trait_styles[i].unigram, trait_styles[j].unigram);
                if (tv < 0.3)
                    fail(ErrorKind::config, "corpus",
                         "styles " + TraitId::from_index(i).code() + " and " + TraitId::from_index(j).code() +
                             " too close (TV " + std::to_string(tv) + " < 0.3)");
            }
        if (min_turn_pairs < 1 || max_turn_pairs < min_turn_pairs)
            fail(ErrorKind::config, "corpus", "bad turn-pair range");
    }

    // Each trait concentrates 60% of its mass on a private 3-symbol band and
    // spreads the rest uniformly; pairwise TV is ~0.56.
    static StyleSpec synthetic_default() {
        StyleSpec spec;
        constexpr double band_mass = 0.6;
        constexpr std::array<double, kTraitCount> mean_words = {4, 4, 6, 4, 3, 3, 3, 2, 3, 3};
        for (size_t k = 0; k < kTraitCount; ++k) {
            TraitStyle& style = spec.trait_styles[k];
            style.unigram.assign(kStyleAlphabetSize, (1.0 - band_mass) / (kStyleAlphabetSize - 3));
            for (size_t b = 0; b < 3; ++b) style.unigram[3 * k + b] = band_mass / 3.0;
            style.mean_words_per_turn = mean_words[k];
        }
        spec.neutral.unigram.assign(kStyleAlphabetSize, 1.0 / kStyleAlphabetSize);
        spec.neutral.mean_words_per_turn = 3.0;
        spec.validate();
        return spec;
    }
};

namespace detail {

inline std::string sample_turn_text(Rng& rng, const TraitStyle& style) {
    const double raw = rng.normal(style.mean_words_per_turn, 1.0);
    const long n_words = std::lround(std::clamp(raw, 1.0, style.mean_words_per_turn * 2.0 + 1.0));
    std::string text;
    for (long w = 0; w < n_words; ++w) {
        if (w > 0) text += ' ';
        const size_t len = 2 + rng.below(4);
        for (size_t c = 0; c < len; ++c) text += kStyleAlphabet[rng.categorical(style.unigram)];
    }
    return text;
}

} // namespace detail

// Deterministic synthetic corpus: discloser turns follow the trait's style,
// questioner turns the shared neutral style. Per-record RNG streams make the
// output independent of generation order.
inline std::vector<DialogueRecord> synth_corpus(const StyleSpec& spec, size_t n_per_trait, uint64_t seed) {
    if (n_per_trait < 1) fail(ErrorKind::domain, "corpus", "n_per_trait must be >= 1");
    spec.validate();
    std::vector<DialogueRecord> records;
    records.reserve(n_per_trait * kTraitCount);
    for (size_t ti = 0; ti < kTraitCount; ++ti) {
        const TraitId trait = TraitId::from_index(ti);
        for (size_t k = 0; k < n_per_trait; ++k) {
            Rng rng(mix_seed(seed, ti, k));
            DialogueRecord rec;
            rec.trait = trait;
            rec.topic = "synthetic/" + trait.code() + "/" + std::to_string(k);
            const size_t pairs = spec.min_turn_pairs + rng.below(spec.max_turn_pairs - spec.min_turn_pairs + 1);
            for (size_t p = 0; p < pairs; ++p) {
                rec.turns.push_back({Speaker::questioner, detail::sample_turn_text(rng, spec.neutral)});
                rec.turns.push_back({Speaker::discloser, detail::sample_turn_text(rng, spec.trait_styles[ti])});
            }
            rec.validate();
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// Concatenated discloser text of a record.
inline std::string discloser_text(const DialogueRecord& rec) {
    std::string text;
    for (const DialogueTurn& t : rec.turns) {
        if (t.speaker != Speaker::discloser) continue;
        if (!text.empty()) text += ' ';
        text += t.text;
    }
    return text;
}

// Nearest-style classification by total variation distance.
inline TraitId classify_by_style(const std::string& text, const StyleSpec& spec) {
    auto dist = empirical_unigram(text);
    if (!dist) fail(ErrorKind::domain, "corpus", "text contains no alphabet symbols");
    size_t best = 0;
    double best_tv = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < kTraitCount; ++i) {
        const double tv = total_variation(*dist, spec.trait_styles[i].unigram);
        if (tv < best_tv) {
            best_tv = tv;
            best = i;
        }
    }
    return TraitId::from_index(best);
}

// ---------------------------------------------------------------------------
// train/eval split

struct SplitResult {
    std::vector<DialogueRecord> train;
    std::vector<DialogueRecord> eval;
};

// Stratified by trait, deterministic under the seed. Every trait present
// keeps at least one record on each side.
inline SplitResult split(const std::vector<DialogueRecord>& records, double eval_fraction, uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        fail(ErrorKind::domain, "corpus", "eval_fraction must lie in (0, 1)");
    std::array<std::vector<size_t>, kTraitCount> by_trait;
    for (size_t i = 0; i < records.size(); ++i) by_trait[records[i].trait.index()].push_back(i);

    SplitResult out;
    for (size_t ti = 0; ti < kTraitCount; ++ti) {
        auto& idx = by_trait[ti];
        if (idx.empty()) continue;
        if (idx.size() < 2)
            fail(ErrorKind::domain, "corpus",
                 "trait " + TraitId::from_index(ti).code() + " has fewer than 2 records; cannot split");
        Rng rng(mix_seed(seed, ti));
        rng.shuffle(idx);
        size_t n_eval = static_cast<size_t>(std::lround(eval_fraction * static_cast<double>(idx.size())));
        n_eval = std::clamp<size_t>(n_eval, 1, idx.size() - 1);
        for (size_t k = 0; k < idx.size(); ++k)
            (k < n_eval ? out.eval : out.train).push_back(records[idx[k]]);
    }
    return out;
}

} // namespace traitmix

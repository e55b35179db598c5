#pragma once

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "traitmix/chat_client.hpp"
#include "traitmix/corpus.hpp"
#include "traitmix/prompts.hpp"

namespace traitmix {

// ---------------------------------------------------------------------------
// stage result types

struct SeedTopic {
    std::string sentence;
    TraitId trait;
    std::string facet_label; // "facet-high", "facet-low" or "neutral"
    std::string source_ref;
};

enum class ValidationStage { automatic, manual };

struct ValidationVerdict {
    ValidationStage stage = ValidationStage::automatic;
    bool passed = false;
    std::vector<std::string> detected_traits; // dimension names
    std::string reason;
};

struct DropEntry {
    std::string stage;
    std::string trait;
    std::string item;
    std::string reason;
};

// ---------------------------------------------------------------------------
// response parsing

// First "facet-high/low" token or the word "neutral", whichever appears first.
inline std::optional<std::string> parse_facet_label(const std::string& response) {
    static const std::regex facet_re(R"(([A-Za-z][A-Za-z-]*)-(high|low)\b)");
    std::smatch m;
    size_t facet_pos = std::string::npos;
    std::string facet;
    if (std::regex_search(response, m, facet_re)) {
        facet_pos = static_cast<size_t>(m.position(0));
        facet = m[1].str() + "-" + m[2].str();
        // lowercase the facet name for the canonical label
        for (char& c : facet) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    size_t neutral_pos = std::string::npos;
    for (size_t at = 0; (at = response.find("eutral", at)) != std::string::npos; ++at) {
        if (at > 0 && (response[at - 1] == 'n' || response[at - 1] == 'N')) {
            neutral_pos = at - 1;
            break;
        }
    }
    if (facet_pos == std::string::npos && neutral_pos == std::string::npos) return std::nullopt;
    if (neutral_pos != std::string::npos && (facet_pos == std::string::npos || neutral_pos < facet_pos))
        return std::string("neutral");
    return facet;
}

// Classifies one sentence through the dimension's prompt. Returns the topic
// when the sentence is usable for this trait; otherwise the drop reason.
inline std::variant<SeedTopic, std::string> classify_seed_sentence(ChatClient& client, TraitId trait,
                                                                   const std::string& sentence,
                                                                   const std::string& source_ref,
                                                                   double temperature = 1.0) {
    const std::string response =
        client.complete(seed_topic_system_prompt(trait.dimension), sentence, {.temperature = temperature});
    const auto label = parse_facet_label(response);
    if (!label) return std::string("unparseable label");
    if (*label == "neutral") return std::string("neutral");
    const bool is_high = label->size() > 5 && label->substr(label->size() - 5) == "-high";
    if (is_high != (trait.level == Level::high)) return std::string("level mismatch (" + *label + ")");
    return SeedTopic{sentence, trait, *label, source_ref};
}

struct TopicExtraction {
    std::vector<SeedTopic> topics;
    std::vector<DropEntry> drops;
};

inline TopicExtraction extract_seed_topics(const std::vector<std::string>& sentences, TraitId trait,
                                           ChatClient& client, double temperature = 1.0) {
    if (sentences.empty()) fail(ErrorKind::domain, "pipeline", "no sentences supplied for " + trait.code());
    TopicExtraction out;
    for (size_t i = 0; i < sentences.size(); ++i) {
        auto result = classify_seed_sentence(client, trait, sentences[i], "sentence#" + std::to_string(i), temperature);
        if (std::holds_alternative<SeedTopic>(result))
            out.topics.push_back(std::get<SeedTopic>(std::move(result)));
        else
            out.drops.push_back({"topics", trait.code(), sentences[i], std::get<std::string>(result)});
    }
    return out;
}

// Parses "Character1:/Character2:" (or "Q:/A:") marked text into alternating
// turns. Unmarked lines continue the current turn; text before the first
// marker is ignored as preamble.
inline DialogueRecord parse_dialogue_text(const std::string& text, TraitId trait, const std::string& topic) {
    DialogueRecord rec;
    rec.trait = trait;
    rec.topic = topic;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        std::string_view view(line);
        while (!view.empty() && view.front() == ' ') view.remove_prefix(1);
        if (view.empty()) continue;

        std::optional<Speaker> speaker;
        for (const auto& [marker, who] : {std::pair<std::string_view, Speaker>{"Character1:", Speaker::questioner},
                                          {"Character2:", Speaker::discloser},
                                          {"Q:", Speaker::questioner},
                                          {"A:", Speaker::discloser}}) {
            if (view.substr(0, marker.size()) == marker) {
                speaker = who;
                view.remove_prefix(marker.size());
                while (!view.empty() && view.front() == ' ') view.remove_prefix(1);
                break;
            }
        }
        if (!speaker) {
            if (!rec.turns.empty()) {
                rec.turns.back().text += " ";
                rec.turns.back().text += std::string(view);
            }
            continue; // preamble before the first marker
        }
        if (rec.turns.empty() && *speaker != Speaker::questioner)
            fail(ErrorKind::parse, "pipeline", "line " + std::to_string(line_no) + ": dialogue must open with the questioner");
        if (!rec.turns.empty() && rec.turns.back().speaker == *speaker)
            fail(ErrorKind::parse, "pipeline",
                 "line " + std::to_string(line_no) + ": two consecutive turns by the same speaker");
        rec.turns.push_back({*speaker, std::string(view)});
    }
    if (rec.turns.size() < 2) fail(ErrorKind::parse, "pipeline", "dialogue has fewer than 2 parsed turns");
    rec.validate();
    return rec;
}

inline DialogueRecord synthesize_dialogue(const SeedTopic& topic, ChatClient& client, double temperature = 1.0) {
    if (topic.facet_label == "neutral")
        fail(ErrorKind::domain, "pipeline", "neutral topics are excluded from synthesis");
    const std::string response = client.complete(synthesis_system_prompt(topic.trait),
                                                 synthesis_user_prompt(topic.trait, topic.sentence),
                                                 {.temperature = temperature});
    return parse_dialogue_text(response, topic.trait, topic.sentence);
}

inline std::string render_dialogue(const DialogueRecord& rec) {
    std::string out;
    for (size_t i = 0; i < rec.turns.size(); ++i) {
        out += rec.turns[i].speaker == Speaker::questioner ? "Character1: " : "Character2: ";
        out += rec.turns[i].text;
        if (i + 1 < rec.turns.size()) out += "\n";
    }
    return out;
}

// Dimension names listed on the last "Result:" line of a judge response.
inline std::vector<std::string> parse_result_dimensions(const std::string& response) {
    size_t pos = response.rfind("Result:");
    if (pos == std::string::npos) return {};
    std::string tail = response.substr(pos + 7);
    if (const size_t nl = tail.find('\n'); nl != std::string::npos) tail = tail.substr(0, nl);
    std::vector<std::string> out;
    static const std::array<const char*, 5> names = {"Openness", "Conscientiousness", "Extraversion",
                                                     "Agreeableness", "Neuroticism"};
    std::string lowered = tail;
    for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (const char* name : names) {
        std::string lname = name;
        for (char& c : lname) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (lowered.find(lname) != std::string::npos) out.push_back(name);
    }
    return out;
}

inline ValidationVerdict auto_validate(const DialogueRecord& record, ChatClient& client, double temperature = 1.0) {
    const std::string response =
        client.complete(validation_system_prompt(), validation_user_prompt(render_dialogue(record)),
                        {.temperature = temperature});
    ValidationVerdict verdict;
    verdict.stage = ValidationStage::automatic;
    verdict.detected_traits = parse_result_dimensions(response);
    if (verdict.detected_traits.empty()) {
        verdict.passed = false;
        verdict.reason = "unparseable";
        return verdict;
    }
    const std::string target = dimension_name(record.trait.dimension);
    verdict.passed = std::find(verdict.detected_traits.begin(), verdict.detected_traits.end(), target) !=
                     verdict.detected_traits.end();
    verdict.reason = verdict.passed ? "detected " + target : "expected " + target + ", judge saw otherwise";
    return verdict;
}

// ---------------------------------------------------------------------------
// stage journal: append-only jsonl, replayed on resume

class StageJournal {
public:
    explicit StageJournal(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                entries_[{j.at("stage").get<std::string>(), j.at("key").get<uint64_t>()}] = j.at("payload");
            } catch (const nlohmann::json::exception&) {
                // a torn trailing line from an interrupted run is ignored; the
                // unit it belonged to is simply redone
            }
        }
    }

    std::optional<nlohmann::json> lookup(const std::string& stage, uint64_t key) const {
        const auto it = entries_.find({stage, key});
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void record(const std::string& stage, uint64_t key, nlohmann::json payload) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_[{stage, key}] = payload;
        std::ofstream out(path_, std::ios::app);
        if (!out) fail(ErrorKind::io, "pipeline", "cannot append to journal '" + path_ + "'");
        out << nlohmann::json{{"stage", stage}, {"key", key}, {"payload", std::move(payload)}}.dump() << "\n";
    }

private:
    std::string path_;
    std::map<std::pair<std::string, uint64_t>, nlohmann::json> entries_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// full pipeline

struct PipelineConfig {
    std::map<std::string, std::vector<std::string>> seed_sentences; // trait code -> sentences
    size_t quota_per_trait = 5;
    std::string output_path;
    std::string journal_path; // defaults to output_path + ".journal"
    double temperature = 1.0;
    size_t parallelism = 4;
    std::optional<std::string> manual_verdicts_path;
    std::optional<std::string> stop_after_stage; // "topics" | "synthesis" (testing/resume aid)

    void validate() const {
        if (output_path.empty()) fail(ErrorKind::config, "pipeline", "output_path is required");
        if (parallelism < 1) fail(ErrorKind::config, "pipeline", "parallelism must be >= 1");
    }

    std::string journal() const { return journal_path.empty() ? output_path + ".journal" : journal_path; }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    if (j.contains("seed_sentences_path")) {
        std::ifstream in(j.at("seed_sentences_path").get<std::string>());
        if (!in) fail(ErrorKind::io, "pipeline", "cannot open seed sentences file");
        nlohmann::json seeds;
        in >> seeds;
        cfg.seed_sentences = seeds.get<std::map<std::string, std::vector<std::string>>>();
    }
    if (j.contains("seed_sentences"))
        cfg.seed_sentences = j.at("seed_sentences").get<std::map<std::string, std::vector<std::string>>>();
    cfg.quota_per_trait = j.value("quota_per_trait", cfg.quota_per_trait);
    cfg.output_path = j.value("output_path", cfg.output_path);
    cfg.journal_path = j.value("journal_path", cfg.journal_path);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (j.contains("manual_verdicts_path")) cfg.manual_verdicts_path = j.at("manual_verdicts_path").get<std::string>();
    if (j.contains("stop_after_stage")) cfg.stop_after_stage = j.at("stop_after_stage").get<std::string>();
    for (const auto& [code, _] : cfg.seed_sentences) (void)TraitId::parse(code); // validate codes early
    return cfg;
}

struct PipelineReport {
    nlohmann::json per_trait = nlohmann::json::object();
    nlohmann::json totals = nlohmann::json::object();
    std::vector<DropEntry> drops;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json drop_list = nlohmann::json::array();
        for (const DropEntry& d : drops)
            drop_list.push_back({{"stage", d.stage}, {"trait", d.trait}, {"item", d.item}, {"reason", d.reason}});
        return {{"per_trait", per_trait}, {"totals", totals}, {"drops", drop_list}, {"warnings", warnings}};
    }
};

struct PipelineResult {
    std::vector<DialogueRecord> dataset;
    PipelineReport report;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads; results land in
// index order, and the first exception (by index) is rethrown after joining.
template <typename Fn>
void parallel_for(size_t n, size_t workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::pair<size_t, std::exception_ptr>> errors;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    errors.emplace_back(i, std::current_exception());
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (!errors.empty()) {
        std::sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::rethrow_exception(errors.front().second);
    }
}

inline uint64_t topic_key(TraitId trait, const std::string& sentence) {
    return fnv1a64(trait.code() + "\x1f" + sentence);
}

inline uint64_t record_key(const DialogueRecord& rec) { return fnv1a64(traitmix::to_json(rec).dump()); }

} // namespace detail

// The three construction stages against a pluggable client, with journaled
// resume. With the scripted mock this is fully deterministic: the dataset and
// report are byte-identical across runs and across interrupt/resume.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, ChatClient& client) {
    cfg.validate();
    StageJournal journal(cfg.journal());
    PipelineReport report;
    std::vector<DialogueRecord> dataset;

    size_t total_sentences = 0, total_topics = 0;
    size_t synth_attempted = 0, synth_ok = 0;
    size_t val_attempted = 0, val_passed = 0;
    size_t manual_dropped = 0;

    for (size_t ti = 0; ti < kTraitCount; ++ti) {
        const TraitId trait = TraitId::from_index(ti);
        const auto sit = cfg.seed_sentences.find(trait.code());
        const std::vector<std::string> sentences = sit == cfg.seed_sentences.end() ? std::vector<std::string>{}
                                                                                   : sit->second;
        nlohmann::json trait_report;
        trait_report["sentences"] = sentences.size();
        trait_report["quota"] = cfg.quota_per_trait;
        total_sentences += sentences.size();

        if (cfg.quota_per_trait > 0 && sentences.empty())
            report.warnings.push_back("no seed sentences for " + trait.code());

        // stage 1: seed-topic extraction
        std::vector<SeedTopic> topics;
        {
            std::vector<std::optional<std::variant<SeedTopic, std::string>>> results(sentences.size());
            detail::parallel_for(sentences.size(), cfg.parallelism, [&](size_t i) {
                const uint64_t key = detail::topic_key(trait, sentences[i]);
                if (auto cached = journal.lookup("topics", key)) {
                    const std::string label = cached->value("label", "");
                    if (cached->value("kept", false))
                        results[i] = SeedTopic{sentences[i], trait, label, "sentence#" + std::to_string(i)};
                    else
                        results[i] = cached->value("reason", std::string("dropped"));
                    return;
                }
                auto outcome =
                    classify_seed_sentence(client, trait, sentences[i], "sentence#" + std::to_string(i), cfg.temperature);
                if (std::holds_alternative<SeedTopic>(outcome)) {
                    journal.record("topics", key, {{"kept", true}, {"label", std::get<SeedTopic>(outcome).facet_label}});
                } else {
                    journal.record("topics", key, {{"kept", false}, {"reason", std::get<std::string>(outcome)}});
                }
                results[i] = std::move(outcome);
            });
            for (size_t i = 0; i < results.size(); ++i) {
                if (std::holds_alternative<SeedTopic>(*results[i]))
                    topics.push_back(std::get<SeedTopic>(std::move(*results[i])));
                else
                    report.drops.push_back({"topics", trait.code(), sentences[i], std::get<std::string>(*results[i])});
            }
        }
        trait_report["topics_kept"] = topics.size();
        trait_report["topics_dropped"] = sentences.size() - topics.size();
        total_topics += topics.size();

        // stage 2: dialogue synthesis, in waves until the quota is met
        std::vector<DialogueRecord> synthesized;
        size_t trait_synth_attempted = 0;
        if (!cfg.stop_after_stage || *cfg.stop_after_stage != "topics") {
            size_t cursor = 0;
            while (synthesized.size() < cfg.quota_per_trait && cursor < topics.size()) {
                const size_t want = cfg.quota_per_trait - synthesized.size();
                const size_t wave = std::min({cfg.parallelism, want, topics.size() - cursor});
                std::vector<std::optional<std::variant<DialogueRecord, std::string>>> results(wave);
                detail::parallel_for(wave, cfg.parallelism, [&](size_t w) {
                    const SeedTopic& topic = topics[cursor + w];
                    const uint64_t key = detail::topic_key(trait, topic.sentence) ^ 0x53594e54ULL;
                    if (auto cached = journal.lookup("synthesis", key)) {
                        if (cached->value("ok", false))
                            results[w] = dialogue_from_json(cached->at("record"));
                        else
                            results[w] = cached->value("reason", std::string("failed"));
                        return;
                    }
                    try {
                        DialogueRecord rec = synthesize_dialogue(topic, client, cfg.temperature);
                        journal.record("synthesis", key, {{"ok", true}, {"record", traitmix::to_json(rec)}});
                        results[w] = std::move(rec);
                    } catch (const Error& e) {
                        if (e.kind() == ErrorKind::client) throw;
                        journal.record("synthesis", key, {{"ok", false}, {"reason", e.what()}});
                        results[w] = std::string(e.what());
                    }
                });
                for (size_t w = 0; w < wave; ++w) {
                    ++trait_synth_attempted;
                    if (std::holds_alternative<DialogueRecord>(*results[w]))
                        synthesized.push_back(std::get<DialogueRecord>(std::move(*results[w])));
                    else
                        report.drops.push_back(
                            {"synthesis", trait.code(), topics[cursor + w].sentence, std::get<std::string>(*results[w])});
                }
                cursor += wave;
            }
        }
        synth_attempted += trait_synth_attempted;
        synth_ok += synthesized.size();
        trait_report["synth_attempted"] = trait_synth_attempted;
        trait_report["synth_ok"] = synthesized.size();

        // stage 3: automatic back validation
        std::vector<DialogueRecord> validated;
        if (!cfg.stop_after_stage) {
            std::vector<std::optional<bool>> passed(synthesized.size());
            std::vector<std::string> reasons(synthesized.size());
            detail::parallel_for(synthesized.size(), cfg.parallelism, [&](size_t i) {
                const uint64_t key = detail::record_key(synthesized[i]);
                if (auto cached = journal.lookup("validate", key)) {
                    passed[i] = cached->value("passed", false);
                    reasons[i] = cached->value("reason", "");
                    return;
                }
                ValidationVerdict verdict = auto_validate(synthesized[i], client, cfg.temperature);
                journal.record("validate", key, {{"passed", verdict.passed}, {"reason", verdict.reason}});
                passed[i] = verdict.passed;
                reasons[i] = verdict.reason;
            });
            for (size_t i = 0; i < synthesized.size(); ++i) {
                ++val_attempted;
                if (*passed[i]) {
                    ++val_passed;
                    validated.push_back(std::move(synthesized[i]));
                } else {
                    report.drops.push_back({"validate", trait.code(), synthesized[i].topic, reasons[i]});
                }
            }
        }
        trait_report["validated"] = validated.size();

        if (!cfg.stop_after_stage && validated.size() < cfg.quota_per_trait) {
            report.warnings.push_back("quota unreachable for " + trait.code() + ": " +
                                      std::to_string(validated.size()) + "/" + std::to_string(cfg.quota_per_trait) +
                                      " after exhausting topics (partial output)");
            trait_report["quota_met"] = false;
        } else if (!cfg.stop_after_stage) {
            trait_report["quota_met"] = true;
        }
        trait_report["final"] = validated.size();
        report.per_trait[trait.code()] = std::move(trait_report);
        for (DialogueRecord& rec : validated) dataset.push_back(std::move(rec));
    }

    // optional manual-validation import
    if (cfg.manual_verdicts_path && !cfg.stop_after_stage) {
        std::ifstream in(*cfg.manual_verdicts_path);
        if (!in) fail(ErrorKind::io, "pipeline", "cannot open manual verdicts file");
        nlohmann::json verdicts;
        in >> verdicts;
        std::map<uint64_t, bool> by_key;
        for (const auto& v : verdicts) by_key[v.at("key").get<uint64_t>()] = v.at("passed").get<bool>();
        std::vector<DialogueRecord> kept;
        for (DialogueRecord& rec : dataset) {
            const auto it = by_key.find(detail::record_key(rec));
            if (it != by_key.end() && !it->second) {
                ++manual_dropped;
                report.drops.push_back({"manual", rec.trait.code(), rec.topic, "manual verdict: failed"});
            } else {
                kept.push_back(std::move(rec));
            }
        }
        dataset = std::move(kept);
    }

    report.totals = {{"sentences", total_sentences},
                     {"topics", total_topics},
                     {"synth_attempted", synth_attempted},
                     {"synth_ok", synth_ok},
                     {"auto_validation",
                      {{"attempted", val_attempted},
                       {"passed", val_passed},
                       {"failed", val_attempted - val_passed},
                       {"pass_rate", val_attempted ? static_cast<double>(val_passed) / val_attempted : 0.0}}},
                     {"manual_dropped", manual_dropped},
                     {"final_records", dataset.size()}};

    if (!cfg.stop_after_stage) {
        const std::string tmp = cfg.output_path + ".tmp";
        write_dialogues(tmp, dataset);
        std::filesystem::rename(tmp, cfg.output_path);
    }
    return {std::move(dataset), std::move(report)};
}

// Key of a record inside manual-verdict files and the stage journal.
inline uint64_t manual_verdict_key(const DialogueRecord& rec) { return detail::record_key(rec); }

} // namespace traitmix

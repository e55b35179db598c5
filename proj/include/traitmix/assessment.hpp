#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "traitmix/chat_client.hpp"
#include "traitmix/corpus.hpp"
#include "traitmix/model.hpp"
#include "traitmix/stats.hpp"

namespace traitmix {

// ---------------------------------------------------------------------------
// inventory

struct InventoryItem {
    std::string id;
    Dimension dimension;
    std::string text;
    bool reverse_scored = false;
};

inline Dimension parse_dimension_letter(const std::string& s) {
    if (s.size() == 1)
        for (size_t d = 0; d < 5; ++d)
            if (s[0] == kDimensionLetters[d]) return static_cast<Dimension>(d);
    fail(ErrorKind::parse, "assessment", "unknown dimension '" + s + "'");
}

inline std::vector<InventoryItem> load_inventory(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "assessment", "cannot open inventory '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, "assessment", std::string("bad inventory file: ") + e.what());
    }
    std::vector<InventoryItem> items;
    for (const auto& entry : j) {
        items.push_back({entry.at("id").get<std::string>(),
                         parse_dimension_letter(entry.at("dimension").get<std::string>()),
                         entry.at("text").get<std::string>(), entry.value("reverse_scored", false)});
    }
    if (items.empty()) fail(ErrorKind::parse, "assessment", "inventory is empty");
    return items;
}

inline void write_inventory(const std::string& path, const std::vector<InventoryItem>& items) {
    nlohmann::json j = nlohmann::json::array();
    for (const InventoryItem& item : items)
        j.push_back({{"id", item.id},
                     {"dimension", std::string(1, kDimensionLetters[static_cast<size_t>(item.dimension)])},
                     {"text", item.text},
                     {"reverse_scored", item.reverse_scored}});
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "assessment", "cannot write inventory '" + path + "'");
    out << j.dump(2) << "\n";
}

// Twenty generic self-disclosure prompts, four per dimension. The bundled
// style judge reads trait expression from response statistics, so none of
// these are reverse-keyed.
inline std::vector<InventoryItem> default_inventory() {
    std::vector<InventoryItem> items;
    const std::array<std::array<const char*, 4>, 5> texts = {{
        {"do you enjoy trying completely new things?", "what do you think about abstract ideas?",
         "how do you feel about changing your routines?", "tell me about something imaginative you did recently."},
        {"how do you plan your week?", "what happens when you face a deadline?",
         "how organized is your workspace?", "tell me how you follow through on commitments."},
        {"how do you feel at large parties?", "what do you do on a free evening with friends around?",
         "how talkative are you in groups?", "tell me about meeting new people."},
        {"how do you handle disagreements?", "what do you do when someone needs help?",
         "how much do you trust strangers?", "tell me about cooperating on a team."},
        {"how do you react when plans fall apart?", "what keeps you up at night?",
         "how do you feel under pressure?", "tell me about a stressful day."},
    }};
    for (size_t d = 0; d < 5; ++d)
        for (size_t k = 0; k < 4; ++k) {
            const char letter = static_cast<char>(std::tolower(kDimensionLetters[d]));
            items.push_back({std::string(1, letter) + std::to_string(k + 1), static_cast<Dimension>(d),
                             texts[d][k], false});
        }
    return items;
}

// ---------------------------------------------------------------------------
// subjects

// Anything that can answer an inventory item with text.
class Subject {
public:
    virtual ~Subject() = default;
    virtual std::string respond(const std::string& prompt, uint64_t seed) = 0;
};

class LocalModelSubject : public Subject {
public:
    LocalModelSubject(ToyLm& model, TraitId trait, double temperature, size_t max_new)
        : model_(model), trait_(trait), temperature_(temperature), max_new_(max_new) {}

    std::string respond(const std::string& prompt, uint64_t seed) override {
        return model_.generate(prompt, trait_, max_new_, temperature_, seed);
    }

private:
    ToyLm& model_;
    TraitId trait_;
    double temperature_;
    size_t max_new_;
};

class EndpointSubject : public Subject {
public:
    EndpointSubject(ChatClient& client, std::string system_prompt, double temperature)
        : client_(client), system_prompt_(std::move(system_prompt)), temperature_(temperature) {}

    std::string respond(const std::string& prompt, uint64_t) override {
        return client_.complete(system_prompt_, prompt, {.temperature = temperature_});
    }

private:
    ChatClient& client_;
    std::string system_prompt_;
    double temperature_;
};

// ---------------------------------------------------------------------------
// administration

struct Transcript {
    std::string item_id;
    size_t run_index = 0;
    uint64_t seed = 0;
    std::optional<std::string> response; // empty on subject failure
    std::string error;
};

// `repeats` independent generations per item, each tagged with its run index
// and derived seed. Subject failures become per-item error markers instead of
// aborting the whole administration.
inline std::vector<Transcript> administer(Subject& subject, const std::vector<InventoryItem>& items, TraitId trait,
                                          size_t repeats, uint64_t base_seed) {
    if (repeats < 1) fail(ErrorKind::domain, "assessment", "repeats must be >= 1");
    if (items.empty()) fail(ErrorKind::domain, "assessment", "no inventory items");
    std::vector<Transcript> out;
    out.reserve(repeats * items.size());
    for (size_t run = 0; run < repeats; ++run) {
        for (size_t i = 0; i < items.size(); ++i) {
            Transcript t;
            t.item_id = items[i].id;
            t.run_index = run;
            t.seed = mix_seed(base_seed, trait.index() * 1000 + run, i);
            try {
                t.response = subject.respond(items[i].text, t.seed);
            } catch (const std::exception& e) {
                t.error = e.what();
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// judging

class LikertJudge {
public:
    virtual ~LikertJudge() = default;
    // 1..5, higher = stronger presence of the item's dimension (high pole)
    virtual int judge(const InventoryItem& item, const std::string& response) = 0;
};

// Rule-based judge for synthetic corpora: compares the response's unigram
// statistics against the high- and low-pole styles of the item's dimension
// and maps the normalized distance gap affinely onto 1..5. Deterministic and
// monotone: moving closer to the high-pole style never lowers the score.
class StyleJudge : public LikertJudge {
public:
    explicit StyleJudge(StyleSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

    int judge(const InventoryItem& item, const std::string& response) override {
        const auto dist = empirical_unigram(response);
        if (!dist) return 3; // no stylistic signal either way
        const auto& high = spec_.trait_styles[TraitId{item.dimension, Level::high}.index()].unigram;
        const auto& low = spec_.trait_styles[TraitId{item.dimension, Level::low}.index()].unigram;
        const double span = total_variation(high, low);
        const double gap = total_variation(*dist, low) - total_variation(*dist, high);
        const double raw = 3.0 + 2.0 * gap / span;
        return static_cast<int>(std::clamp(std::lround(raw), 1L, 5L));
    }

private:
    StyleSpec spec_;
};

// External judge speaking the chat protocol; expects a single digit back.
class EndpointJudge : public LikertJudge {
public:
    explicit EndpointJudge(ChatClient& client, double temperature = 0.0)
        : client_(client), temperature_(temperature) {}

    int judge(const InventoryItem& item, const std::string& response) override {
        const std::string system_prompt =
            "You assess personality expression. Rate how strongly the response displays high " +
            std::string(dimension_name(item.dimension)) +
            " on a 5-point Likert scale, where 1 means very low and 5 means very high. Answer with a single digit.";
        const std::string user_prompt = "Item: " + item.text + "\nResponse: " + response + "\nScore:";
        const std::string reply = client_.complete(system_prompt, user_prompt, {.temperature = temperature_});
        for (char c : reply)
            if (c >= '1' && c <= '5') return c - '0';
        fail(ErrorKind::parse, "assessment", "judge reply carries no 1..5 score: '" + reply + "'");
    }

private:
    ChatClient& client_;
    double temperature_;
};

// ---------------------------------------------------------------------------
// scoring

struct ItemScore {
    std::string item_id;
    size_t run_index = 0;
    int score = 0; // after reverse-keying
};

struct ScoreResult {
    std::vector<ItemScore> scores;
    size_t missing = 0; // failed responses, excluded rather than imputed
};

inline ScoreResult score(const std::vector<Transcript>& transcripts, const std::vector<InventoryItem>& items,
                         LikertJudge& judge) {
    if (transcripts.empty()) fail(ErrorKind::domain, "assessment", "no transcripts to score");
    ScoreResult out;
    for (const Transcript& t : transcripts) {
        const auto it = std::find_if(items.begin(), items.end(),
                                     [&](const InventoryItem& item) { return item.id == t.item_id; });
        if (it == items.end()) fail(ErrorKind::domain, "assessment", "transcript for unknown item '" + t.item_id + "'");
        if (!t.response) {
            ++out.missing;
            continue;
        }
        int s = judge.judge(*it, *t.response);
        if (s < 1 || s > 5)
            fail(ErrorKind::domain, "assessment",
                 "judge contract violation: score " + std::to_string(s) + " outside 1..5");
        if (it->reverse_scored) s = 6 - s;
        out.scores.push_back({t.item_id, t.run_index, s});
    }
    return out;
}

// Mean score per run over the scored items (missing responses excluded).
inline std::vector<double> run_means(const ScoreResult& scored, size_t repeats) {
    std::vector<double> sums(repeats, 0.0);
    std::vector<size_t> counts(repeats, 0);
    for (const ItemScore& s : scored.scores) {
        sums[s.run_index] += s.score;
        counts[s.run_index] += 1;
    }
    std::vector<double> means;
    for (size_t r = 0; r < repeats; ++r)
        if (counts[r] > 0) means.push_back(sums[r] / static_cast<double>(counts[r]));
    return means;
}

// ---------------------------------------------------------------------------
// aggregation

struct AggregateReport {
    std::array<std::vector<double>, kTraitCount> condition_run_means;
    std::array<double, kTraitCount> mean{};
    std::array<double, kTraitCount> stddev{}; // sample std over repeat-run means
    double avg_high = 0.0, avg_low = 0.0, overall = 0.0;
    std::vector<double> run_avg_high, run_avg_low, run_overall; // when run counts align
    double avg_high_std = 0.0, avg_low_std = 0.0, overall_std = 0.0;
};

// Per-condition cell = mean of the repeat-run means; Avg+ / Avg- are the
// unweighted means of the five high / low cells and Overall their difference.
inline AggregateReport aggregate(const std::array<std::vector<double>, kTraitCount>& condition_run_means) {
    AggregateReport report;
    report.condition_run_means = condition_run_means;
    for (size_t i = 0; i < kTraitCount; ++i) {
        const auto& runs = condition_run_means[i];
        if (runs.empty())
            fail(ErrorKind::domain, "assessment",
                 "missing condition " + TraitId::from_index(i).code() + " in aggregation");
        report.mean[i] = sample_mean(runs);
        report.stddev[i] = runs.size() >= 2 ? sample_stddev(runs) : 0.0;
    }
    for (size_t d = 0; d < 5; ++d) {
        report.avg_high += report.mean[d] / 5.0;
        report.avg_low += report.mean[d + 5] / 5.0;
    }
    report.overall = report.avg_high - report.avg_low;

    const size_t runs = condition_run_means[0].size();
    const bool aligned = std::all_of(condition_run_means.begin(), condition_run_means.end(),
                                     [&](const auto& v) { return v.size() == runs; });
    if (aligned && runs >= 1) {
        for (size_t r = 0; r < runs; ++r) {
            double high = 0.0, low = 0.0;
            for (size_t d = 0; d < 5; ++d) {
                high += condition_run_means[d][r] / 5.0;
                low += condition_run_means[d + 5][r] / 5.0;
            }
            report.run_avg_high.push_back(high);
            report.run_avg_low.push_back(low);
            report.run_overall.push_back(high - low);
        }
        if (runs >= 2) {
            report.avg_high_std = sample_stddev(report.run_avg_high);
            report.avg_low_std = sample_stddev(report.run_avg_low);
            report.overall_std = sample_stddev(report.run_overall);
        }
    }
    return report;
}

// Per-cell two-sided Welch p-values between two reports (needs >= 2 runs on
// both sides). Order: ten conditions, then Avg+, Avg-, Overall.
struct SignificanceRow {
    std::array<double, kTraitCount> cell_p{};
    double avg_high_p = 1.0, avg_low_p = 1.0, overall_p = 1.0;
};

inline SignificanceRow compare_reports(const AggregateReport& a, const AggregateReport& b) {
    SignificanceRow row;
    for (size_t i = 0; i < kTraitCount; ++i)
        row.cell_p[i] = welch_p(a.condition_run_means[i], b.condition_run_means[i]);
    row.avg_high_p = welch_p(a.run_avg_high, b.run_avg_high);
    row.avg_low_p = welch_p(a.run_avg_low, b.run_avg_low);
    row.overall_p = welch_p(a.run_overall, b.run_overall);
    return row;
}

inline nlohmann::json to_json(const AggregateReport& r) {
    nlohmann::json cells = nlohmann::json::object();
    for (size_t i = 0; i < kTraitCount; ++i) {
        const std::string code = TraitId::from_index(i).code();
        cells[code] = {{"mean", r.mean[i]}, {"stddev", r.stddev[i]}, {"runs", r.condition_run_means[i]}};
    }
    return {{"cells", cells},
            {"avg_high", r.avg_high},
            {"avg_low", r.avg_low},
            {"overall", r.overall},
            {"avg_high_std", r.avg_high_std},
            {"avg_low_std", r.avg_low_std},
            {"overall_std", r.overall_std}};
}

// Aligned text row in the canonical column order:
// O+ C+ E+ A+ N+ Avg+ O- C- E- A- N- Avg- Overall.
inline std::string format_report_row(const std::string& label, const AggregateReport& r,
                                     const SignificanceRow* sig = nullptr, double alpha = 0.05) {
    std::ostringstream out;
    char buf[32];
    auto cell = [&](double value, double p) {
        std::snprintf(buf, sizeof(buf), "%5.2f%s", value, (sig && p < alpha) ? "*" : " ");
        out << buf;
    };
    out << "Model         O+    C+    E+    A+    N+    Avg+  O-    C-    E-    A-    N-    Avg-  Overall\n";
    std::snprintf(buf, sizeof(buf), "%-12s", label.c_str());
    out << buf;
    for (size_t d = 0; d < 5; ++d) cell(r.mean[d], sig ? sig->cell_p[d] : 1.0);
    cell(r.avg_high, sig ? sig->avg_high_p : 1.0);
    for (size_t d = 0; d < 5; ++d) cell(r.mean[d + 5], sig ? sig->cell_p[d + 5] : 1.0);
    cell(r.avg_low, sig ? sig->avg_low_p : 1.0);
    cell(r.overall, sig ? sig->overall_p : 1.0);
    out << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// closed-loop assessment of a local model

struct AssessmentConfig {
    size_t repeats = 5;
    double temperature = 0.8;
    size_t max_new = 48;
    uint64_t seed = 0;
};

// Conditions the model on each trait in turn, administers the items of that
// trait's dimension, scores with the judge and aggregates.
inline AggregateReport assess_local_model(ToyLm& model, const std::vector<InventoryItem>& items, LikertJudge& judge,
                                          const AssessmentConfig& cfg) {
    std::array<std::vector<double>, kTraitCount> condition_run_means;
    for (const TraitId& trait : TraitId::all()) {
        std::vector<InventoryItem> subset;
        for (const InventoryItem& item : items)
            if (item.dimension == trait.dimension) subset.push_back(item);
        if (subset.empty())
            fail(ErrorKind::domain, "assessment",
                 std::string("inventory has no items for dimension ") + dimension_name(trait.dimension));
        LocalModelSubject subject(model, trait, cfg.temperature, cfg.max_new);
        auto transcripts = administer(subject, subset, trait, cfg.repeats, mix_seed(cfg.seed, trait.index()));
        auto scored = score(transcripts, subset, judge);
        condition_run_means[trait.index()] = run_means(scored, cfg.repeats);
    }
    return aggregate(condition_run_means);
}

// ---------------------------------------------------------------------------
// router-weight export

struct RouterLayerExport {
    std::string layer;
    std::vector<std::vector<double>> rows; // [trait][expert], each row sums to 1
    double gram_offdiag_mean = 0.0;
    double gram_offdiag_max = 0.0;
};

// Per-layer trait-to-expert weightings plus a Gram off-diagonal summary of
// cross-trait expert overlap. Only mixture checkpoints carry routers.
inline std::vector<RouterLayerExport> export_router_weights(ToyLm& model) {
    if (model.config().regime != AdapterRegime::moe)
        fail(ErrorKind::checkpoint, "assessment",
             std::string("checkpoint regime '") + to_string(model.config().regime) + "' has no routing parameters");
    std::vector<RouterLayerExport> out;
    const size_t traits = model.personality_table().trait_count();
    const size_t experts = model.config().adapter.num_experts;
    for (size_t r = 0; r < model.router_count(); ++r) {
        RouterLayerExport layer;
        layer.layer = model.config().adapter.shared_router ? "shared" : "layer" + std::to_string(r);
        const auto m = weighting_matrix_values(model.personality_table(), model.router(r)); // [experts x traits]
        layer.rows.assign(traits, std::vector<double>(experts, 0.0));
        for (size_t e = 0; e < experts; ++e)
            for (size_t t = 0; t < traits; ++t) layer.rows[t][e] = m[e * traits + t];
        double sum = 0.0, mx = 0.0;
        for (size_t i = 0; i < traits; ++i)
            for (size_t j = 0; j < traits; ++j) {
                if (i == j) continue;
                double dot = 0.0;
                for (size_t e = 0; e < experts; ++e) dot += layer.rows[i][e] * layer.rows[j][e];
                sum += std::fabs(dot);
                mx = std::max(mx, std::fabs(dot));
            }
        layer.gram_offdiag_mean = traits > 1 ? sum / static_cast<double>(traits * (traits - 1)) : 0.0;
        layer.gram_offdiag_max = mx;
        out.push_back(std::move(layer));
    }
    return out;
}

inline std::string router_export_csv(const std::vector<RouterLayerExport>& layers) {
    std::string csv = "layer,trait,expert,weight\n";
    char buf[64];
    for (const RouterLayerExport& layer : layers)
        for (size_t t = 0; t < layer.rows.size(); ++t)
            for (size_t e = 0; e < layer.rows[t].size(); ++e) {
                std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.12g\n", layer.layer.c_str(),
                              TraitId::from_index(t).code().c_str(), e, layer.rows[t][e]);
                csv += buf;
            }
    return csv;
}

inline nlohmann::json router_export_json(const std::vector<RouterLayerExport>& layers) {
    nlohmann::json out = nlohmann::json::array();
    for (const RouterLayerExport& layer : layers) {
        nlohmann::json rows = nlohmann::json::object();
        for (size_t t = 0; t < layer.rows.size(); ++t) rows[TraitId::from_index(t).code()] = layer.rows[t];
        out.push_back({{"layer", layer.layer},
                       {"weights", rows},
                       {"gram_offdiag_mean", layer.gram_offdiag_mean},
                       {"gram_offdiag_max", layer.gram_offdiag_max}});
    }
    return out;
}

} // namespace traitmix

#pragma once

#include <array>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "traitmix/model.hpp"

namespace traitmix {

// Cross-entropy matrix over conditioning trait x data trait. Cell (c, t) is
// the mean discloser cross-entropy of trait-t records under conditioning c.
// "Matching wins" compares, per data trait, the matched conditioning against
// the mean of the nine mismatched ones; fixing the data column cancels
// per-style entropy differences, so the comparison isolates conditioning.
struct EvalLmResult {
    std::array<std::array<double, kTraitCount>, kTraitCount> ce{}; // [cond][data]
    std::array<size_t, kTraitCount> records_per_trait{};
    std::array<bool, kTraitCount> matching_win{};
    size_t win_count = 0;
};

inline EvalLmResult eval_lm_matrix(ToyLm& model, const std::vector<DialogueRecord>& records, size_t max_per_trait,
                                   size_t max_input_len) {
    if (records.empty()) fail(ErrorKind::domain, "eval", "empty evaluation corpus");
    const bool tag = model.config().regime == AdapterRegime::single_lora;

    std::array<std::vector<const DialogueRecord*>, kTraitCount> by_trait;
    for (const DialogueRecord& rec : records) {
        auto& bucket = by_trait[rec.trait.index()];
        if (bucket.size() < max_per_trait && has_discloser_targets(rec, tag, max_input_len))
            bucket.push_back(&rec);
    }

    EvalLmResult result;
    for (size_t t = 0; t < kTraitCount; ++t) {
        const auto& bucket = by_trait[t];
        result.records_per_trait[t] = bucket.size();
        if (bucket.empty())
            fail(ErrorKind::domain, "eval", "no usable records for trait " + TraitId::from_index(t).code());
        for (size_t c = 0; c < kTraitCount; ++c) {
            const TraitId cond = TraitId::from_index(c);
            double total = 0.0;
            for (const DialogueRecord* rec : bucket) {
                Tape tape;
                ParamBinding bind(tape);
                total += dialogue_lm_loss(tape, bind, model, *rec, cond, max_input_len).scalar();
            }
            result.ce[c][t] = total / static_cast<double>(bucket.size());
        }
    }
    for (size_t t = 0; t < kTraitCount; ++t) {
        double mismatched = 0.0;
        for (size_t c = 0; c < kTraitCount; ++c)
            if (c != t) mismatched += result.ce[c][t];
        mismatched /= static_cast<double>(kTraitCount - 1);
        result.matching_win[t] = result.ce[t][t] < mismatched;
        result.win_count += result.matching_win[t] ? 1 : 0;
    }
    return result;
}

inline nlohmann::json to_json(const EvalLmResult& r) {
    nlohmann::json matrix = nlohmann::json::object();
    for (size_t c = 0; c < kTraitCount; ++c) {
        nlohmann::json row = nlohmann::json::object();
        for (size_t t = 0; t < kTraitCount; ++t) row[TraitId::from_index(t).code()] = r.ce[c][t];
        matrix[TraitId::from_index(c).code()] = row;
    }
    nlohmann::json wins = nlohmann::json::object();
    for (size_t t = 0; t < kTraitCount; ++t) wins[TraitId::from_index(t).code()] = r.matching_win[t];
    return {{"cross_entropy", matrix}, {"matching_wins", wins}, {"win_count", r.win_count}};
}

inline std::string format_eval_table(const EvalLmResult& r) {
    std::ostringstream out;
    char buf[32];
    out << "cond\\data";
    for (size_t t = 0; t < kTraitCount; ++t) {
        std::snprintf(buf, sizeof(buf), "%7s", TraitId::from_index(t).code().c_str());
        out << buf;
    }
    out << "\n";
    for (size_t c = 0; c < kTraitCount; ++c) {
        std::snprintf(buf, sizeof(buf), "%-9s", TraitId::from_index(c).code().c_str());
        out << buf;
        for (size_t t = 0; t < kTraitCount; ++t) {
            std::snprintf(buf, sizeof(buf), "%7.3f", r.ce[c][t]);
            out << buf;
        }
        out << "\n";
    }
    out << "matching wins: " << r.win_count << "/10\n";
    return out.str();
}

} // namespace traitmix

#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "traitmix/error.hpp"

namespace traitmix {

enum class Dimension { openness, conscientiousness, extraversion, agreeableness, neuroticism };
enum class Level { high, low };

constexpr size_t kTraitCount = 10;
constexpr std::array<char, 5> kDimensionLetters = {'O', 'C', 'E', 'A', 'N'};

inline const char* dimension_name(Dimension d) {
    switch (d) {
    case Dimension::openness: return "Openness";
    case Dimension::conscientiousness: return "Conscientiousness";
    case Dimension::extraversion: return "Extraversion";
    case Dimension::agreeableness: return "Agreeableness";
    case Dimension::neuroticism: return "Neuroticism";
    }
    return "?";
}

// One of the ten trait conditions (five dimensions, each at a high or low
// level). Indexing is highs 0..4 then lows 5..9, matching report column order.
struct TraitId {
    Dimension dimension;
    Level level;

    size_t index() const {
        return static_cast<size_t>(dimension) + (level == Level::high ? 0 : 5);
    }

    std::string code() const {
        return std::string(1, kDimensionLetters[static_cast<size_t>(dimension)]) +
               (level == Level::high ? "+" : "-");
    }

    bool operator==(const TraitId&) const = default;

    static TraitId from_index(size_t i) {
        if (i >= kTraitCount) fail(ErrorKind::domain, "trait", "trait index out of range: " + std::to_string(i));
        return TraitId{static_cast<Dimension>(i % 5), i < 5 ? Level::high : Level::low};
    }

    static TraitId parse(const std::string& code) {
        if (code.size() == 2 && (code[1] == '+' || code[1] == '-')) {
            for (size_t d = 0; d < 5; ++d) {
                if (code[0] == kDimensionLetters[d])
                    return TraitId{static_cast<Dimension>(d), code[1] == '+' ? Level::high : Level::low};
            }
        }
        fail(ErrorKind::parse, "trait", "unknown trait code '" + code + "'");
    }

    static const std::array<TraitId, kTraitCount>& all() {
        static const std::array<TraitId, kTraitCount> traits = [] {
            std::array<TraitId, kTraitCount> out{};
            for (size_t i = 0; i < kTraitCount; ++i) out[i] = from_index(i);
            return out;
        }();
        return traits;
    }
};

} // namespace traitmix

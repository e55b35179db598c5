#pragma once

#include <string>

#include "traitmix/trait.hpp"

namespace traitmix {

inline const char* level_word(Level level) { return level == Level::high ? "high" : "low"; }

// ---------------------------------------------------------------------------
// seed-topic extraction: one classifier prompt per dimension

namespace detail {

inline std::string seed_topic_prompt(const std::string& dimension_lc, const std::string& facets,
                                     const std::string& example_facet) {
    return "Assuming you are a seasoned psychologist, you are evaluating the degree of " + dimension_lc +
           " in a sentence, categorize each sentence into high or low " + dimension_lc + ".\n" + facets + "\n" +
           "For each input text, determine whether it belongs to high " + dimension_lc + " or low " + dimension_lc +
           ", and provide the reasoning behind the decision. The output should be in the format of "
           "\"facet-high/low\" (e.g. \"" +
           example_facet +
           "\" ), if the text is an advertisment or a fact (without personal thinking of feeling), output category "
           "with neutral (e.g. \"neutral\").";
}

} // namespace detail

inline std::string seed_topic_system_prompt(Dimension dim) {
    switch (dim) {
    case Dimension::openness:
        return detail::seed_topic_prompt(
            "openness",
            "Openness involves six facets, or dimensions: active imagination (fantasy), aesthetic sensitivity "
            "(aesthetic), attentiveness to inner feelings (feelings), preference for variety (actions), "
            "intellectual curiosity (ideas), and challenging authority or psychological liberalism (values).",
            "fantasy-high");
    case Dimension::conscientiousness:
        return detail::seed_topic_prompt(
            "conscientiousness",
            "Conscientiousness involves six facets, or dimensions: ability to control and regulate one's behavior "
            "(self-discipline), sense of duty and responsibility (dutifulness), striving for success and setting "
            "high goals (achievement-striving), preference for organization and cleanliness (orderliness), "
            "reliability and dependability (responsibility), and tendency to be cautious and avoid risks "
            "(cautiousness).",
            "orderliness-high");
    case Dimension::extraversion:
        return detail::seed_topic_prompt(
            "extraversion",
            "Extraversion involves six facets, or dimensions: friendliness and approachability (warmth), enjoyment "
            "of socializing and being around others (gregariousness), confidence and assertive behavior "
            "(assertiveness), preference for being active and busy (activity level), desire for novelty and "
            "excitement (excitement-seeking), tendency to feel positive emotions frequently (positive-emotions).",
            "gregariousness-high");
    case Dimension::agreeableness:
        return detail::seed_topic_prompt(
            "agreeableness",
            "Agreeableness involves six facets, or dimensions: tendency to trust and be trusting (trust), honesty "
            "and directness in communication (straightforwardness), concern for the well-being of others and "
            "willingness to help (altruism), inclination to comply with rules and authority (compliance), humility "
            "and lack of self-promotion (modesty), and sensitivity to others' emotions and needs "
            "(tender-mindedness).",
            "straightforwardness-high");
    case Dimension::neuroticism:
        return detail::seed_topic_prompt(
            "neuroticism",
            "Neuroticism involves six facets, or dimensions: tendency to experience anxiety and worry (anxiety), "
            "inclination to be hostile and show aggression (hostility), tendency to feel sadness and low mood "
            "(depression), self-consciousness and concern about others' opinions (self-consciousness), "
            "susceptibility to stress and feeling vulnerable (vulnerability), and tendency to act impulsively "
            "without thinking (impulsiveness).",
            "hostility-high");
    }
    fail(ErrorKind::domain, "prompts", "unknown dimension");
}

// ---------------------------------------------------------------------------
// dialogue synthesis

inline std::string synthesis_system_prompt(TraitId trait) {
    return std::string("As a screenwriter, you are assigned to create a dialogue in a question and answer format "
                       "between two characters. The responses given by these characters should demonstrate a ") +
           level_word(trait.level) + " level of " + dimension_name(trait.dimension) +
           ", which is one of the traits in the Big Five personality model.";
}

inline std::string synthesis_user_prompt(TraitId trait, const std::string& seed_topic) {
    // the four non-target dimensions, in the template's canonical order
    static const Dimension order[] = {Dimension::extraversion, Dimension::agreeableness,
                                      Dimension::conscientiousness, Dimension::neuroticism, Dimension::openness};
    std::string others;
    int remaining = 4;
    for (Dimension d : order) {
        if (d == trait.dimension) continue;
        if (!others.empty()) others += (remaining == 1) ? " and " : ", ";
        others += dimension_name(d);
        --remaining;
    }
    return std::string("Craft dialogue according the [seed topic] following [requirements]: \n") +
           "[requirements]: \n" +
           "- each dialogue contains 5 turns.\n" +
           "- the dialogue begins with a question\n" +
           "- Character1 asks Character2 questions\n" +
           "- Character1's question does not assume any trait of Character2\n" +
           "- Character1 and Character2 use \"you\" to refer to each other\n" +
           "- Character2 should demonstrate a " + level_word(trait.level) + " level of " +
           dimension_name(trait.dimension) + " in implicit way\n" +
           "- Character2 should not demonstrate " + others + "\n" +
           "- each turn contains no more than 80 words\n" +
           "- Character1 knows nothing about the [seed topic]\n" +
           "[seed topic]:\n" + seed_topic;
}

// ---------------------------------------------------------------------------
// back validation

inline std::string validation_system_prompt() {
    return "Read the dialogue between Character1 and Character2, and determine what dimensions of the Big Five "
           "personality (Extraversion, Agreeableness, Conscientiousness, Neuroticism, Openness) are represented in "
           "the responses of character2. First output the reason and then output the result seperated by commas. "
           "Follow the given example.";
}

inline std::string validation_user_prompt(const std::string& rendered_dialogue) {
    return std::string("Input:\n") +
           "Character1: Are you sad or depressed?\n" +
           "Character2: I don't know, maybe. But what if I start crying and can't stop? What if I embarrass myself "
           "in front of everyone?\n" +
           "Output:\n" +
           "Reson: Character2's response indicates a high level of Neuroticism. This is evident from the expression "
           "of worry and fear about potential negative outcomes, such as crying uncontrollably and embarrassing "
           "themselves in front of others. These concerns suggest a tendency towards anxiety and self-consciousness, "
           "which are facets of Neuroticism.\n" +
           "Result: Neuroticism\n\n" +
           "Input:\n" +
           "Character1: Are you original and often come up with new ideas?\n" +
           "Character2: Absolutely! I have a vivid imagination and a knack for thinking outside the box. It's like a "
           "never-ending stream of creativity that flows through my mind.\n" +
           "Output:\n" +
           "Reason: Character2's response showcases a high level of Openness. This is reflected in their "
           "self-description of having a vivid imagination and being adept at thinking outside the box. These "
           "characteristics align with the Openness dimension, which includes traits such as creativity, "
           "originality, and a preference for variety and novelty. Character2's description of their mind as a "
           "\"never-ending stream of creativity\" further emphasizes their strong inclination towards imaginative "
           "and innovative thinking.\n" +
           "Result: Openness\n\n" +
           "Input:\n" + rendered_dialogue + "\n" +
           "Output:\n";
}

} // namespace traitmix

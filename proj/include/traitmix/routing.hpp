#pragma once

#include <string>
#include <vector>

#include "traitmix/lora.hpp"
#include "traitmix/param.hpp"
#include "traitmix/rng.hpp"
#include "traitmix/tensor.hpp"
#include "traitmix/trait.hpp"

namespace traitmix {

// Learnable personality vectors, one row per trait condition. Shared across
// the whole model.
struct PersonalityTable {
    Param table; // [trait_count, personality_dim]

    size_t trait_count() const { return table.shape.at(0); }
    size_t dim() const { return table.shape.at(1); }
};

// Linear map from a personality vector to expert logits. One per adapted
// transformer layer (or one shared, see AdapterConfig::shared_router).
struct Router {
    Param gate; // [personality_dim, num_experts]

    size_t dim() const { return gate.shape.at(0); }
    size_t num_experts() const { return gate.shape.at(1); }
};

inline PersonalityTable init_personality_table(size_t trait_count, size_t personality_dim, Rng& rng) {
    std::vector<double> v(trait_count * personality_dim);
    for (double& x : v) x = rng.normal(0.0, 0.02);
    return PersonalityTable{Param("personality_table", {trait_count, personality_dim}, std::move(v))};
}

inline Router init_router(const std::string& name, size_t personality_dim, size_t num_experts, Rng& rng) {
    std::vector<double> v(personality_dim * num_experts);
    for (double& x : v) x = rng.normal(0.0, 0.02);
    return Router{Param(name, {personality_dim, num_experts}, std::move(v))};
}

// Expert weighting for one trait: omega = softmax(p_i * G). Depends only on
// the trait id and the parameters, never on input tokens.
inline Tensor route(ParamBinding& bind, PersonalityTable& table, Router& router, TraitId trait) {
    const size_t i = trait.index();
    if (i >= table.trait_count())
        fail(ErrorKind::domain, "routing", "trait " + trait.code() + " not registered in the personality table");
    if (table.dim() != router.dim())
        fail(ErrorKind::shape, "routing", "personality dim mismatch between table and router");
    Tensor p_row = slice_rows(bind.use(table.table), i, i + 1); // [1, d_P]
    Tensor logits = matmul(p_row, bind.use(router.gate));       // [1, N]
    return reshape(softmax_rows(logits), {router.num_experts()});
}

// Column-stacks every trait's weighting: M[:, i] = route(trait_i). Shape
// [num_experts, trait_count]; every column is a probability distribution.
inline Tensor weighting_matrix(ParamBinding& bind, PersonalityTable& table, Router& router) {
    std::vector<Tensor> cols;
    cols.reserve(table.trait_count());
    for (size_t i = 0; i < table.trait_count(); ++i)
        cols.push_back(route(bind, table, router, TraitId::from_index(i)));
    return stack_cols(cols);
}

// Plain-value helpers for inspection/export paths (no gradients involved).
inline std::vector<double> route_values(PersonalityTable& table, Router& router, TraitId trait) {
    Tape tape;
    ParamBinding bind(tape);
    return route(bind, table, router, trait).values();
}

inline std::vector<double> weighting_matrix_values(PersonalityTable& table, Router& router) {
    Tape tape;
    ParamBinding bind(tape);
    return weighting_matrix(bind, table, router).values();
}

} // namespace traitmix

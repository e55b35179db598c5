#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "traitmix/param.hpp"
#include "traitmix/rng.hpp"
#include "traitmix/tensor.hpp"

namespace traitmix {

// Shared adapter hyper-parameters. total_rank is split evenly across the
// experts, so the trainable A/B parameter count is invariant in num_experts.
struct AdapterConfig {
    size_t num_experts = 16;
    size_t total_rank = 256;
    double alpha = 16.0;
    double psl_weight = 0.1;
    size_t personality_dim = 16;
    size_t trait_count = 10;
    std::vector<std::string> adapted_matrices = {"attn_q", "attn_k", "attn_v", "ffn_in", "ffn_out"};
    bool shared_router = false;

    size_t expert_rank() const { return total_rank / num_experts; }

    void validate() const {
        if (num_experts == 0) fail(ErrorKind::config, "lora", "num_experts must be >= 1");
        if (total_rank == 0 || total_rank % num_experts != 0)
            fail(ErrorKind::config, "lora",
                 "total_rank " + std::to_string(total_rank) + " not divisible by num_experts " +
                     std::to_string(num_experts));
        if (!(alpha > 0.0)) fail(ErrorKind::config, "lora", "alpha must be positive");
        if (psl_weight < 0.0) fail(ErrorKind::config, "lora", "psl_weight must be nonnegative");
        if (personality_dim == 0) fail(ErrorKind::config, "lora", "personality_dim must be >= 1");
        if (trait_count == 0) fail(ErrorKind::config, "lora", "trait_count must be >= 1");
        if (adapted_matrices.empty()) fail(ErrorKind::config, "lora", "no adapted matrices selected");
    }
};

// One low-rank expert: delta = B * A with A:[rank, d_in], B:[d_out, rank].
struct LoraExpert {
    Param a;
    Param b;

    size_t rank() const { return a.shape[0]; }
};

// A dense layer with a frozen weight and a bank of LoRA experts on top.
struct AdaptedLinear {
    std::string name;
    size_t d_in = 0;
    size_t d_out = 0;
    double alpha = 1.0;
    size_t total_rank = 1;
    Param weight; // frozen, [d_out, d_in]
    std::vector<LoraExpert> experts;

    size_t num_experts() const { return experts.size(); }
};

namespace detail {

inline std::vector<double> gaussian_values(Rng& rng, size_t n, double stddev) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return v;
}

} // namespace detail

// Attaches num_experts rank-(total_rank/num_experts) experts to a frozen
// weight. A is Gaussian(0, 0.02^2), B starts at zero so the initial delta
// vanishes and the layer reproduces the base output exactly.
inline AdaptedLinear init_adapted_linear(std::string name, Param frozen_weight, size_t num_experts, size_t total_rank,
                                         double alpha, Rng& rng) {
    if (total_rank == 0 || total_rank % num_experts != 0)
        fail(ErrorKind::config, "lora", "total_rank not divisible by num_experts");
    AdaptedLinear layer;
    layer.name = std::move(name);
    layer.d_out = frozen_weight.shape.at(0);
    layer.d_in = frozen_weight.shape.at(1);
    layer.alpha = alpha;
    layer.total_rank = total_rank;
    frozen_weight.trainable = false;
    layer.weight = std::move(frozen_weight);
    const size_t rank = total_rank / num_experts;
    layer.experts.reserve(num_experts);
    for (size_t j = 0; j < num_experts; ++j) {
        const std::string prefix = layer.name + ".expert" + std::to_string(j);
        Param a(prefix + ".a", {rank, layer.d_in}, detail::gaussian_values(rng, rank * layer.d_in, 0.02));
        Param b(prefix + ".b", {layer.d_out, rank}, std::vector<double>(layer.d_out * rank, 0.0));
        layer.experts.push_back(LoraExpert{std::move(a), std::move(b)});
    }
    return layer;
}

// Variant used by the per-trait baseline: every expert carries the full rank.
inline AdaptedLinear init_adapted_linear_full_rank(std::string name, Param frozen_weight, size_t num_adapters,
                                                   size_t rank, double alpha, Rng& rng) {
    AdaptedLinear layer = init_adapted_linear(std::move(name), std::move(frozen_weight), 1, rank, alpha, rng);
    Rng extra(rng.next_u64());
    while (layer.experts.size() < num_adapters) {
        const std::string prefix = layer.name + ".expert" + std::to_string(layer.experts.size());
        Param a(prefix + ".a", {rank, layer.d_in}, detail::gaussian_values(extra, rank * layer.d_in, 0.02));
        Param b(prefix + ".b", {layer.d_out, rank}, std::vector<double>(layer.d_out * rank, 0.0));
        layer.experts.push_back(LoraExpert{std::move(a), std::move(b)});
    }
    return layer;
}

namespace detail {

inline Tensor expert_delta(ParamBinding& bind, LoraExpert& expert, const Tensor& x) {
    Tensor a_t = transpose(bind.use(expert.a)); // [d_in, rank]
    Tensor b_t = transpose(bind.use(expert.b)); // [rank, d_out]
    return matmul(matmul(x, a_t), b_t);
}

} // namespace detail

// Base output only: X * W^T for X of shape [T, d_in].
inline Tensor base_forward(ParamBinding& bind, AdaptedLinear& layer, const Tensor& x) {
    return matmul(x, transpose(bind.use(layer.weight)));
}

// Single-expert path: O = X W^T + (alpha / rank_of_expert) * X A^T B^T.
// With the default expert (index 0) of a one-expert layer this is the plain
// LoRA dense-layer forward.
inline Tensor lora_forward(ParamBinding& bind, AdaptedLinear& layer, const Tensor& x, size_t expert_index = 0) {
    if (expert_index >= layer.experts.size())
        fail(ErrorKind::domain, "lora", "expert index " + std::to_string(expert_index) + " out of range");
    LoraExpert& expert = layer.experts[expert_index];
    Tensor base = base_forward(bind, layer, x);
    Tensor delta = detail::expert_delta(bind, expert, x);
    const double scaling = layer.alpha / static_cast<double>(expert.rank());
    return add(base, scale(delta, scaling));
}

// Mixture path: O = X W^T + (alpha / total_rank) * sum_j omega_j X A_j^T B_j^T.
// omega must be a probability distribution over the experts.
inline Tensor moe_lora_forward(ParamBinding& bind, AdaptedLinear& layer, const Tensor& x, const Tensor& omega) {
    const size_t n = layer.experts.size();
    if (omega.size() != n)
        fail(ErrorKind::shape, "lora",
             "omega length " + std::to_string(omega.size()) + " != expert count " + std::to_string(n));
    double total = 0.0;
    for (double w : omega.values()) {
        if (w < 0.0) fail(ErrorKind::domain, "lora", "omega has a negative entry");
        total += w;
    }
    if (std::fabs(total - 1.0) > 1e-9) fail(ErrorKind::domain, "lora", "omega does not sum to 1");

    Tensor base = base_forward(bind, layer, x);
    std::optional<Tensor> mix;
    for (size_t j = 0; j < n; ++j) {
        Tensor contrib = scale_by(detail::expert_delta(bind, layer.experts[j], x), pick(omega, j));
        mix = mix ? add(*mix, contrib) : contrib;
    }
    const double scaling = layer.alpha / static_cast<double>(layer.total_rank);
    return add(base, scale(*mix, scaling));
}

// Trainable A/B parameter count over a set of adapted layer dimensions:
// sum over layers of N * (rank * d_in + d_out * rank) with rank = r / N.
// Router and personality-table parameters are reported separately.
inline size_t trainable_param_count(const AdapterConfig& config, const std::vector<std::pair<size_t, size_t>>& dims) {
    config.validate();
    const size_t rank = config.expert_rank();
    size_t total = 0;
    for (const auto& [d_in, d_out] : dims) total += config.num_experts * (rank * d_in + d_out * rank);
    return total;
}

} // namespace traitmix

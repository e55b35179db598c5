#pragma once

#include <optional>
#include <string>
#include <vector>

#include "traitmix/tensor.hpp"

namespace traitmix {

enum class RegularizerMode { psl, aux, none };

inline const char* to_string(RegularizerMode m) {
    switch (m) {
    case RegularizerMode::psl: return "psl";
    case RegularizerMode::aux: return "aux";
    case RegularizerMode::none: return "none";
    }
    return "?";
}

inline RegularizerMode parse_regularizer_mode(const std::string& s) {
    if (s == "psl") return RegularizerMode::psl;
    if (s == "aux") return RegularizerMode::aux;
    if (s == "none") return RegularizerMode::none;
    fail(ErrorKind::config, "objectives", "unknown regularizer mode '" + s + "'");
}

// Specialization loss over a weighting matrix M [num_experts, trait_count]:
// the sum of absolute off-diagonal entries of the Gram matrix M^T M. Zero
// exactly when the trait columns use pairwise disjoint expert subsets.
inline Tensor specialization_loss(const Tensor& weighting) {
    return sum_offdiag_abs(matmul(transpose(weighting), weighting));
}

// Soft load-balancing baseline: N * sum_j (mean_i M[j, i])^2. Equals 1 for a
// perfectly balanced matrix and N when every trait routes to one expert.
inline Tensor auxiliary_balance_loss(const Tensor& weighting) {
    const auto [num_experts, traits] = detail::rows_cols(weighting);
    Tape& tape = weighting.tape();
    Tensor ones = tape.constant({traits, 1}, std::vector<double>(traits, 1.0 / static_cast<double>(traits)));
    Tensor col_mean = matmul(weighting, ones); // [N, 1]
    return scale(sum(mul(col_mean, col_mean)), static_cast<double>(num_experts));
}

struct LossBreakdown {
    double lm = 0.0;
    std::optional<double> psl;
    std::optional<double> aux;
    double total = 0.0;
    std::vector<double> per_layer_regularizer;
};

struct TotalLoss {
    Tensor total;
    LossBreakdown breakdown;
};

// Combined objective: total = lm + lambda * mean(per-layer regularizer).
// Averaging over layers keeps lambda's meaning independent of layer count.
inline TotalLoss total_loss(const Tensor& lm, const std::vector<Tensor>& regularizer_per_layer, double lambda,
                            RegularizerMode mode) {
    if (lambda < 0.0) fail(ErrorKind::domain, "objectives", "lambda must be nonnegative");
    TotalLoss out{lm, {}};
    out.breakdown.lm = lm.scalar();
    if (mode == RegularizerMode::none) {
        out.breakdown.total = out.breakdown.lm;
        return out;
    }
    if (regularizer_per_layer.empty())
        fail(ErrorKind::domain, "objectives", "regularizer mode active but no per-layer values supplied");
    std::optional<Tensor> acc;
    for (const Tensor& r : regularizer_per_layer) {
        if (r.size() != 1) fail(ErrorKind::shape, "objectives", "per-layer regularizer must be scalar");
        out.breakdown.per_layer_regularizer.push_back(r.scalar());
        acc = acc ? add(*acc, r) : r;
    }
    Tensor reg_mean = scale(*acc, 1.0 / static_cast<double>(regularizer_per_layer.size()));
    const double reg_value = reg_mean.scalar();
    if (mode == RegularizerMode::psl)
        out.breakdown.psl = reg_value;
    else
        out.breakdown.aux = reg_value;
    out.total = add(lm, scale(reg_mean, lambda));
    out.breakdown.total = out.total.scalar();
    return out;
}

} // namespace traitmix

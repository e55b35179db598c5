#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "traitmix/error.hpp"
#include "traitmix/tensor.hpp"

namespace traitmix {

struct ParamSpec {
    Shape shape;
    std::vector<double> values;
};

// Builder receives a fresh tape plus the parameter leaves (one per ParamSpec,
// same order) and must return a scalar loss on that tape. It is re-invoked
// many times; it must be a deterministic function of the leaf values.
using ScalarGraphBuilder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

namespace detail {

inline double eval_loss(const ScalarGraphBuilder& f, const std::vector<ParamSpec>& theta) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(theta.size());
    for (const ParamSpec& p : theta) leaves.push_back(tape.leaf(p.shape, p.values, true));
    Tensor loss = f(tape, leaves);
    if (loss.size() != 1) fail(ErrorKind::shape, "gradcheck", "builder must return a scalar loss");
    return loss.scalar();
}

} // namespace detail

// Max over all parameter coordinates of
//   |analytic - central difference| / max(1, |analytic|).
// Central differences use a fresh graph per probe, so the builder must be
// deterministic; a repeated-evaluation mismatch is reported as an oracle error.
inline double finite_diff_check(const ScalarGraphBuilder& f, const std::vector<ParamSpec>& theta, double eps = 1e-5) {
    if (!(eps > 0.0 && eps <= 1e-2)) fail(ErrorKind::domain, "gradcheck", "eps must lie in (0, 1e-2]");

    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(theta.size());
    for (const ParamSpec& p : theta) leaves.push_back(tape.leaf(p.shape, p.values, true));
    Tensor loss = f(tape, leaves);
    if (loss.size() != 1) fail(ErrorKind::shape, "gradcheck", "builder must return a scalar loss");
    const double base = loss.scalar();
    if (!std::isfinite(base)) fail(ErrorKind::oracle, "gradcheck", "loss is not finite at the probe point");
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(theta.size());
    for (const Tensor& l : leaves) analytic.push_back(l.grad());

    if (detail::eval_loss(f, theta) != base)
        fail(ErrorKind::oracle, "gradcheck", "builder is not deterministic (repeated evaluation differs)");

    double max_rel_err = 0.0;
    std::vector<ParamSpec> probe = theta;
    for (size_t p = 0; p < theta.size(); ++p) {
        for (size_t c = 0; c < theta[p].values.size(); ++c) {
            const double orig = probe[p].values[c];
            probe[p].values[c] = orig + eps;
            const double plus = detail::eval_loss(f, probe);
            probe[p].values[c] = orig - eps;
            const double minus = detail::eval_loss(f, probe);
            probe[p].values[c] = orig;
            const double fd = (plus - minus) / (2.0 * eps);
            const double a = analytic[p][c];
            const double rel = std::fabs(a - fd) / std::max(1.0, std::fabs(a));
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

} // namespace traitmix

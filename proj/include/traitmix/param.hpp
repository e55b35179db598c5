#pragma once

#include <string>
#include <utility>
#include <vector>

#include "traitmix/tensor.hpp"

namespace traitmix {

// A persistent parameter living across training steps. Forward passes bind it
// onto a tape as a leaf; the trainer pulls gradients back out afterwards.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Shape s, std::vector<double> v, bool train = true)
        : name(std::move(n)), shape(std::move(s)), value(std::move(v)), grad(value.size(), 0.0), trainable(train) {
        if (numel(shape) != value.size())
            fail(ErrorKind::shape, "param", "param '" + name + "': shape/value mismatch");
    }

    size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Per-tape registry of parameter leaves. A parameter may be bound several
// times on one tape; gradient pull-back sums every binding.
class ParamBinding {
public:
    explicit ParamBinding(Tape& tape) : tape_(&tape) {}

    Tensor use(Param& p) {
        Tensor t = tape_->leaf(p.shape, p.value, p.trainable);
        if (p.trainable) bound_.emplace_back(&p, t);
        return t;
    }

    // Adds dLoss/dLeaf into each bound parameter's grad buffer. Call after
    // Tape::backward; iteration order is binding order, so results are
    // deterministic.
    void accumulate_grads(double scale = 1.0) {
        for (auto& [param, tensor] : bound_) {
            const auto& g = tensor.grad();
            for (size_t i = 0; i < g.size(); ++i) param->grad[i] += scale * g[i];
        }
    }

private:
    Tape* tape_;
    std::vector<std::pair<Param*, Tensor>> bound_;
};

} // namespace traitmix

#pragma once

#include "sdm/rng.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

// Dense affine layer: y = x @ weight + bias, weight [in x out], bias [1 x out].
struct LinearLayer {
    Tensor weight;
    Tensor bias;

    LinearLayer() = default;

    // Weights uniform in +-1/sqrt(fan_in), biases zero. Draw order is
    // row-major over the weight matrix, so a fixed rng stream pins the init.
    LinearLayer(Index in, Index out, Rng& rng) : weight(in, out), bias(1, out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& w : weight.values()) w = rng.uniform(-bound, bound);
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    // All-zero weights and biases (e.g. a prediction head that should start
    // indifferent: sigmoid of zero logits is exactly 0.5).
    static LinearLayer zeros(Index in, Index out) {
        LinearLayer layer;
        layer.weight = Tensor(in, out);
        layer.bias = Tensor(1, out);
        layer.weight.set_requires_grad(true);
        layer.bias.set_requires_grad(true);
        return layer;
    }

    Tensor apply(Graph& g, const Tensor& x) const {
        return add_row_vector(g, matmul(g, x, weight), bias);
    }

    Index parameter_count() const { return weight.size() + bias.size(); }
};

}  // namespace sdm

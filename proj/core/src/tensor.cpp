#include "sdm/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <utility>

namespace sdm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap map_of(const Tensor& t) {
    return ECMap(t.values().data(), t.rows(), t.cols());
}

EMap map_of_grad(Tensor& t) {
    return EMap(t.grad().data(), t.rows(), t.cols());
}

std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + "]";
}

}  // namespace

// ---- Tensor ------------------------------------------------------------

Tensor::Tensor(Index rows, Index cols) : state_(std::make_shared<State>()) {
    if (rows < 0 || cols < 0) {
        throw DimensionError("tensor dimensions must be non-negative, got " +
                             std::to_string(rows) + " x " + std::to_string(cols));
    }
    state_->rows = rows;
    state_->cols = cols;
    state_->values.assign(static_cast<std::size_t>(rows * cols), 0.0);
}

Tensor::Tensor(Index rows, Index cols, double fill) : Tensor(rows, cols) {
    for (double& v : state_->values) v = fill;
}

Tensor::Tensor(Index rows, Index cols, std::vector<double> values) : Tensor(rows, cols) {
    if (static_cast<Index>(values.size()) != rows * cols) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not fill a " + std::to_string(rows) + " x " +
                             std::to_string(cols) + " tensor");
    }
    state_->values = std::move(values);
}

Tensor& Tensor::set_requires_grad(bool on) {
    state_->requires_grad = on;
    if (on) {
        state_->grad.assign(state_->values.size(), 0.0);
    } else {
        state_->grad.clear();
    }
    return *this;
}

std::span<double> Tensor::grad() {
    if (!state_->requires_grad) {
        throw ContractError("grad() on a tensor that does not require grad");
    }
    return state_->grad;
}

std::span<const double> Tensor::grad() const {
    if (!state_->requires_grad) {
        throw ContractError("grad() on a tensor that does not require grad");
    }
    return state_->grad;
}

void Tensor::zero_grad() {
    for (double& v : grad()) v = 0.0;
}

void Tensor::accumulate_grad(std::span<const double> delta) {
    auto g = grad();
    if (delta.size() != g.size()) {
        throw DimensionError("gradient delta size " + std::to_string(delta.size()) +
                             " does not match parameter size " + std::to_string(g.size()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// ---- Graph -------------------------------------------------------------

void Graph::backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ContractError("backward() expects a scalar, got " + shape_str(loss));
    }
    if (!loss.requires_grad()) {
        return;  // loss saw no gradient-bearing tensor; nothing to propagate
    }
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        (*it)();
    }
}

// ---- ops ----------------------------------------------------------------

namespace {

// Shared output setup: mark the output differentiable iff some input is and
// the graph is live. Returns whether a backward step should be recorded.
bool wants_backward(Graph& g, std::initializer_list<const Tensor*> inputs, Tensor& out) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->requires_grad();
    if (any) out.set_requires_grad(true);
    return any && g.recording();
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a) +
                             " @ " + shape_str(b));
    }
    Tensor out(a.rows(), b.cols());
    EMap(out.values().data(), out.rows(), out.cols()) = map_of(a) * map_of(b);
    if (wants_backward(g, {&a, &b}, out)) {
        g.record([a = a, b = b, out = out]() mutable {
            ECMap dout(out.grad().data(), out.rows(), out.cols());
            if (a.requires_grad()) {
                map_of_grad(a) += dout * map_of(b).transpose();
            }
            if (b.requires_grad()) {
                map_of_grad(b) += map_of(a).transpose() * dout;
            }
        });
    }
    return out;
}

Tensor relu(Graph& g, const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    auto xin = x.values();
    auto xout = out.values();
    for (std::size_t i = 0; i < xin.size(); ++i) {
        xout[i] = xin[i] > 0.0 ? xin[i] : 0.0;
    }
    if (wants_backward(g, {&x}, out)) {
        g.record([x = x, out = out]() mutable {
            auto dx = x.grad();
            auto dy = out.grad();
            auto xin = x.values();
            for (std::size_t i = 0; i < dx.size(); ++i) {
                if (xin[i] > 0.0) dx[i] += dy[i];
            }
        });
    }
    return out;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
    // Smallest/largest representable values strictly inside (0, 1); saturated
    // inputs clamp here so log(y) and log(1-y) stay finite.
    static const double kLo = std::numeric_limits<double>::denorm_min();
    static const double kHi = std::nextafter(1.0, 0.0);
    Tensor out(x.rows(), x.cols());
    auto xin = x.values();
    auto y = out.values();
    for (std::size_t i = 0; i < xin.size(); ++i) {
        double v = xin[i];
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            s = e / (1.0 + e);
        }
        y[i] = std::min(std::max(s, kLo), kHi);
    }
    if (wants_backward(g, {&x}, out)) {
        g.record([x = x, out = out]() mutable {
            auto dx = x.grad();
            auto dy = out.grad();
            auto y = out.values();
            for (std::size_t i = 0; i < dx.size(); ++i) {
                dx[i] += dy[i] * y[i] * (1.0 - y[i]);
            }
        });
    }
    return out;
}

Tensor dropout(Graph& g, const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ParameterError("dropout probability must lie in [0, 1), got " +
                             std::to_string(p));
    }
    if (!training || p == 0.0) {
        return x;  // identity; no mask drawn, nothing recorded
    }
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(x.size());
    for (double& m : *mask) {
        m = rng.uniform() < p ? 0.0 : keep_scale;
    }
    Tensor out(x.rows(), x.cols());
    auto xin = x.values();
    auto y = out.values();
    for (std::size_t i = 0; i < xin.size(); ++i) {
        y[i] = xin[i] * (*mask)[i];
    }
    if (wants_backward(g, {&x}, out)) {
        g.record([x = x, out = out, mask]() mutable {
            auto dx = x.grad();
            auto dy = out.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) {
                dx[i] += dy[i] * (*mask)[i];  // identical mask as forward
            }
        });
    }
    return out;
}

Tensor concat_cols(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols row counts differ: " + shape_str(a) +
                             " vs " + shape_str(b));
    }
    Tensor out(a.rows(), a.cols() + b.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        for (Index c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
        for (Index c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
    }
    if (wants_backward(g, {&a, &b}, out)) {
        g.record([a = a, b = b, out = out]() mutable {
            const Index ac = a.cols();
            for (Index r = 0; r < out.rows(); ++r) {
                if (a.requires_grad()) {
                    auto da = a.grad();
                    for (Index c = 0; c < ac; ++c) {
                        da[r * ac + c] += out.grad()[r * out.cols() + c];
                    }
                }
                if (b.requires_grad()) {
                    auto db = b.grad();
                    for (Index c = 0; c < b.cols(); ++c) {
                        db[r * b.cols() + c] += out.grad()[r * out.cols() + ac + c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add shapes differ: " + shape_str(a) + " vs " + shape_str(b));
    }
    Tensor out(a.rows(), a.cols());
    auto av = a.values();
    auto bv = b.values();
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    if (wants_backward(g, {&a, &b}, out)) {
        g.record([a = a, b = b, out = out]() mutable {
            auto dy = out.grad();
            if (a.requires_grad()) a.accumulate_grad(dy);
            if (b.requires_grad()) b.accumulate_grad(dy);
        });
    }
    return out;
}

Tensor add_row_vector(Graph& g, const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw DimensionError("row vector " + shape_str(row) +
                             " does not broadcast over " + shape_str(x));
    }
    Tensor out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        for (Index c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) + row(0, c);
    }
    if (wants_backward(g, {&x, &row}, out)) {
        g.record([x = x, row = row, out = out]() mutable {
            auto dy = out.grad();
            if (x.requires_grad()) x.accumulate_grad(dy);
            if (row.requires_grad()) {
                auto dr = row.grad();
                for (Index r = 0; r < out.rows(); ++r) {
                    for (Index c = 0; c < out.cols(); ++c) {
                        dr[c] += dy[r * out.cols() + c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor sum(Graph& g, const Tensor& x) {
    Tensor out(1, 1);
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out(0, 0) = acc;
    if (wants_backward(g, {&x}, out)) {
        g.record([x = x, out = out]() mutable {
            const double d = out.grad()[0];
            auto dx = x.grad();
            for (double& v : dx) v += d;
        });
    }
    return out;
}

Tensor mean(Graph& g, const Tensor& x) {
    if (x.size() == 0) {
        throw DimensionError("mean of an empty tensor");
    }
    Tensor out = sum(g, x);
    // Fold the 1/n into a fresh op so sum()'s backward stays untouched.
    return scale(g, out, 1.0 / static_cast<double>(x.size()));
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
    Tensor out(x.rows(), x.cols());
    auto xin = x.values();
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xin[i] * factor;
    if (wants_backward(g, {&x}, out)) {
        g.record([x = x, out = out, factor]() mutable {
            auto dx = x.grad();
            auto dy = out.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
        });
    }
    return out;
}

}  // namespace sdm

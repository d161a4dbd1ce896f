#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/rng.hpp"

namespace sdm {

using Index = std::int64_t;

// Dense 2D array of doubles with an optional same-shape gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage. That is what lets
// the tape hold onto the exact buffers an op read and wrote without deep
// copies, and what makes "parameter" tensors updatable in place between steps.
class Tensor {
  public:
    Tensor() : Tensor(0, 0) {}
    Tensor(Index rows, Index cols);
    Tensor(Index rows, Index cols, double fill);
    Tensor(Index rows, Index cols, std::vector<double> values);

    Index rows() const { return state_->rows; }
    Index cols() const { return state_->cols; }
    Index size() const { return state_->rows * state_->cols; }
    bool same_shape(const Tensor& other) const {
        return rows() == other.rows() && cols() == other.cols();
    }

    double& operator()(Index r, Index c) {
        return state_->values[r * state_->cols + c];
    }
    double operator()(Index r, Index c) const {
        return state_->values[r * state_->cols + c];
    }

    std::span<double> values() { return state_->values; }
    std::span<const double> values() const { return state_->values; }

    // Gradient buffer management. The buffer exists iff requires_grad.
    bool requires_grad() const { return state_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();
    void accumulate_grad(std::span<const double> delta);

    // True when both handles alias the same storage.
    bool same_storage(const Tensor& other) const { return state_ == other.state_; }

  private:
    struct State {
        Index rows = 0;
        Index cols = 0;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<State> state_;
};

// A parameter tensor plus the name it is checkpointed under.
struct NamedParam {
    std::string name;
    Tensor value;
};

// Tape of executed operations. Each differentiable op appends one backward
// step closing over the tensors it touched; backward() replays the tape in
// reverse execution order exactly once, accumulating gradients additively.
//
// A Graph is single-threaded state: one graph per concurrent forward/backward.
class Graph {
  public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    // Appends a backward step. Callers only record steps whose output
    // actually requires grad; record() itself is unconditional.
    void record(std::function<void()> backward_step) {
        tape_.push_back(std::move(backward_step));
    }

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
    // Steps not on the path to `loss` see zero upstream grads and are no-ops.
    void backward(const Tensor& loss);

    void clear() { tape_.clear(); }
    std::size_t recorded_steps() const { return tape_.size(); }

  private:
    std::vector<std::function<void()>> tape_;
    bool recording_ = true;
};

// ---- operations -------------------------------------------------------
//
// Each op validates shapes, computes its output, and (when the graph is
// recording and some input requires grad) registers a backward step that
// accumulates into its inputs' grad buffers.

// [n x k] @ [k x m] -> [n x m]
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

// max(x, 0) elementwise.
Tensor relu(Graph& g, const Tensor& x);

// Logistic function, numerically stable; outputs clamped to the open (0, 1)
// so downstream log() calls stay finite even for saturating inputs.
Tensor sigmoid(Graph& g, const Tensor& x);

// Inverted dropout: keep with probability 1-p and scale kept entries by
// 1/(1-p) so the expectation is unchanged. Identity when not training or
// p == 0. The mask is drawn from `rng` and reused verbatim in backward.
Tensor dropout(Graph& g, const Tensor& x, double p, bool training, Rng& rng);

// Column-wise concatenation: [n x a] ++ [n x b] -> [n x (a+b)].
Tensor concat_cols(Graph& g, const Tensor& a, const Tensor& b);

// Elementwise sum of two same-shape tensors.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);

// Adds a [1 x m] row vector to every row of a [n x m] tensor.
Tensor add_row_vector(Graph& g, const Tensor& x, const Tensor& row);

// Scalar reductions ([1 x 1] outputs) and scaling.
Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);
Tensor scale(Graph& g, const Tensor& x, double factor);

}  // namespace sdm

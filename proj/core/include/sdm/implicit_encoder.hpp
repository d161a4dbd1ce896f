#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdm/linear.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

// Periodic positional encoding of normalized coordinates.
//
// Input rows are (lat, lon), both in [-1, 1]; output rows are
// (sin pi*lon, cos pi*lon, sin pi*lat, cos pi*lat). Longitude -1 is
// canonicalized to +1 before evaluation so the two representations of the
// antimeridian produce bitwise-identical encodings.
Tensor wrap_encode(const Tensor& coords);

// Fully connected residual encoder over wrap-encoded coordinates.
//
// Architecture: Linear(4 -> width) + relu, then four residual blocks of
//   y <- y + relu(Linear(dropout(relu(Linear(y)))))
// with all hidden layers of size `width`. Output is the final residual
// stream (no output activation).
class ImplicitEncoder {
  public:
    static constexpr int kBlocks = 4;

    ImplicitEncoder(Index width, double dropout_p, Rng& init_rng);

    // `dropout_rng` is consumed only when training; pass the run's dedicated
    // dropout stream so other consumers of randomness stay unperturbed.
    Tensor forward(Graph& g, const Tensor& coords, bool training,
                   Rng* dropout_rng) const;

    Index width() const { return width_; }
    double dropout_p() const { return dropout_p_; }

    Index parameter_count() const;
    static Index expected_parameter_count(Index width);

    void collect_parameters(const std::string& prefix,
                            std::vector<NamedParam>& out) const;

  private:
    struct Block {
        LinearLayer first;
        LinearLayer second;
    };

    Index width_ = 0;
    double dropout_p_ = 0.0;
    LinearLayer input_proj_;
    std::array<Block, kBlocks> blocks_;
};

}  // namespace sdm

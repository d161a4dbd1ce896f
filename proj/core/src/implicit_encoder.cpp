#include "sdm/implicit_encoder.hpp"

#include <cmath>
#include <numbers>

#include "sdm/errors.hpp"

namespace sdm {

Tensor wrap_encode(const Tensor& coords) {
    if (coords.cols() != 2) {
        throw DimensionError("wrap_encode expects [n x 2] (lat, lon), got [" +
                             std::to_string(coords.rows()) + " x " +
                             std::to_string(coords.cols()) + "]");
    }
    constexpr double pi = std::numbers::pi;
    Tensor out(coords.rows(), 4);
    for (Index r = 0; r < coords.rows(); ++r) {
        const double lat = coords(r, 0);
        double lon = coords(r, 1);
        if (lat < -1.0 || lat > 1.0 || lon < -1.0 || lon > 1.0) {
            throw DomainError("coordinate out of [-1, 1] range at row " +
                              std::to_string(r) + ": lat=" + std::to_string(lat) +
                              " lon=" + std::to_string(lon));
        }
        if (lon == -1.0) lon = 1.0;  // antimeridian seam: one representative
        out(r, 0) = std::sin(pi * lon);
        out(r, 1) = std::cos(pi * lon);
        out(r, 2) = std::sin(pi * lat);
        out(r, 3) = std::cos(pi * lat);
    }
    return out;
}

ImplicitEncoder::ImplicitEncoder(Index width, double dropout_p, Rng& init_rng)
    : width_(width), dropout_p_(dropout_p) {
    if (width <= 0) {
        throw ParameterError("implicit encoder width must be positive, got " +
                             std::to_string(width));
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw ParameterError("dropout probability must lie in [0, 1), got " +
                             std::to_string(dropout_p));
    }
    input_proj_ = LinearLayer(4, width, init_rng);
    for (Block& b : blocks_) {
        b.first = LinearLayer(width, width, init_rng);
        b.second = LinearLayer(width, width, init_rng);
    }
}

Tensor ImplicitEncoder::forward(Graph& g, const Tensor& coords, bool training,
                                Rng* dropout_rng) const {
    if (training && dropout_p_ > 0.0 && dropout_rng == nullptr) {
        throw ContractError("training forward needs a dropout rng");
    }
    Tensor y = relu(g, input_proj_.apply(g, wrap_encode(coords)));
    for (const Block& b : blocks_) {
        Tensor h = relu(g, b.first.apply(g, y));
        if (training && dropout_p_ > 0.0) {
            h = dropout(g, h, dropout_p_, training, *dropout_rng);
        }
        h = relu(g, b.second.apply(g, h));
        y = add(g, y, h);
    }
    return y;
}

Index ImplicitEncoder::parameter_count() const {
    Index n = input_proj_.parameter_count();
    for (const Block& b : blocks_) {
        n += b.first.parameter_count() + b.second.parameter_count();
    }
    return n;
}

Index ImplicitEncoder::expected_parameter_count(Index width) {
    // input projection + four blocks of two square layers with biases
    return 4 * width + width + kBlocks * 2 * (width * width + width);
}

void ImplicitEncoder::collect_parameters(const std::string& prefix,
                                         std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".input_proj.weight", input_proj_.weight});
    out.push_back({prefix + ".input_proj.bias", input_proj_.bias});
    for (int i = 0; i < kBlocks; ++i) {
        const std::string base = prefix + ".block" + std::to_string(i);
        out.push_back({base + ".linear1.weight", blocks_[i].first.weight});
        out.push_back({base + ".linear1.bias", blocks_[i].first.bias});
        out.push_back({base + ".linear2.weight", blocks_[i].second.weight});
        out.push_back({base + ".linear2.bias", blocks_[i].second.bias});
    }
}

}  // namespace sdm

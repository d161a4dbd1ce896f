#include "sdm/hashgrid_encoder.hpp"

#include <cmath>

#include "sdm/errors.hpp"

namespace sdm {

std::vector<double> resolution_schedule(double r_min, double r_max, Index levels) {
    if (levels <= 0) {
        throw ParameterError("resolution schedule needs at least one level, got " +
                             std::to_string(levels));
    }
    if (r_min < 1.0 || r_max < r_min) {
        throw ParameterError("resolution bounds must satisfy 1 <= r_min <= r_max, got [" +
                             std::to_string(r_min) + ", " + std::to_string(r_max) + "]");
    }
    std::vector<double> out(static_cast<std::size_t>(levels));
    out.front() = r_min;
    if (levels == 1) return out;
    out.back() = r_max;
    const double log_span = std::log(r_max) - std::log(r_min);
    for (Index l = 1; l + 1 < levels; ++l) {
        const double t = static_cast<double>(l) / static_cast<double>(levels - 1);
        out[static_cast<std::size_t>(l)] = r_min * std::exp(t * log_span);
    }
    return out;
}

HashGridEncoder::HashGridEncoder(const HashGridConfig& config, Index levels,
                                 Index features_per_level, Rng& init_rng)
    : config_(config), features_per_level_(features_per_level) {
    if (features_per_level <= 0) {
        throw ParameterError("features per level must be positive, got " +
                             std::to_string(features_per_level));
    }
    if (config.table_size <= 0) {
        throw ParameterError("table size must be positive, got " +
                             std::to_string(config.table_size));
    }
    const std::vector<double> schedule =
        resolution_schedule(config.r_min, config.r_max, levels);
    levels_.reserve(schedule.size());
    tables_.reserve(schedule.size());
    for (Index l = 0; l < levels; ++l) {
        GridLevelSpec spec;
        spec.level = l;
        spec.resolution = schedule[static_cast<std::size_t>(l)];
        spec.grid_res = static_cast<Index>(std::floor(spec.resolution));
        const Index lattice_rows = (spec.grid_res + 1) * (spec.grid_res + 1);
        spec.dense = lattice_rows <= config.table_size;
        spec.table_rows = spec.dense ? lattice_rows : config.table_size;
        levels_.push_back(spec);

        Tensor table(spec.table_rows, features_per_level);
        for (double& v : table.values()) v = init_rng.uniform(-1e-4, 1e-4);
        table.set_requires_grad(true);
        tables_.push_back(table);
    }
}

Index HashGridEncoder::vertex_index(const GridLevelSpec& level, Index i, Index j) const {
    if (i < 0 || i > level.grid_res || j < 0 || j > level.grid_res) {
        throw DomainError("vertex (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") outside lattice of level " + std::to_string(level.level));
    }
    if (config_.wrap_lon && j == level.grid_res) j = 0;  // periodic seam
    if (level.dense) {
        return i * (level.grid_res + 1) + j;
    }
    const std::uint64_t h = static_cast<std::uint64_t>(i) * kHashMul1 ^
                            static_cast<std::uint64_t>(j) * kHashMul2;
    return static_cast<Index>(h % static_cast<std::uint64_t>(level.table_rows));
}

namespace {

struct CellFootprint {
    // Four corner rows with bilinear weights, order (i0,j0) (i0,j0+1) (i0+1,j0) (i0+1,j0+1).
    Index rows[4];
    double weights[4];
};

}  // namespace

// Shared gather/scatter geometry for one point at one level.
static CellFootprint footprint(const HashGridEncoder& enc, const GridLevelSpec& level,
                               double lat, double lon) {
    const double res = static_cast<double>(level.grid_res);
    const double u = (lat + 1.0) * 0.5 * res;
    const double v = (lon + 1.0) * 0.5 * res;
    // Upper boundary folds into the last cell (frac becomes exactly 1).
    Index i0 = static_cast<Index>(std::floor(u));
    Index j0 = static_cast<Index>(std::floor(v));
    if (i0 > level.grid_res - 1) i0 = level.grid_res - 1;
    if (j0 > level.grid_res - 1) j0 = level.grid_res - 1;
    const double fi = u - static_cast<double>(i0);
    const double fj = v - static_cast<double>(j0);

    CellFootprint cell;
    cell.rows[0] = enc.vertex_index(level, i0, j0);
    cell.rows[1] = enc.vertex_index(level, i0, j0 + 1);
    cell.rows[2] = enc.vertex_index(level, i0 + 1, j0);
    cell.rows[3] = enc.vertex_index(level, i0 + 1, j0 + 1);
    cell.weights[0] = (1.0 - fi) * (1.0 - fj);
    cell.weights[1] = (1.0 - fi) * fj;
    cell.weights[2] = fi * (1.0 - fj);
    cell.weights[3] = fi * fj;
    return cell;
}

static void check_domain(const Tensor& coords) {
    if (coords.cols() != 2) {
        throw DimensionError("hashgrid encode expects [n x 2] (lat, lon), got [" +
                             std::to_string(coords.rows()) + " x " +
                             std::to_string(coords.cols()) + "]");
    }
    for (Index r = 0; r < coords.rows(); ++r) {
        const double lat = coords(r, 0);
        const double lon = coords(r, 1);
        if (lat < -1.0 || lat > 1.0 || lon < -1.0 || lon > 1.0) {
            throw DomainError("coordinate out of [-1, 1] range at row " +
                              std::to_string(r) + ": lat=" + std::to_string(lat) +
                              " lon=" + std::to_string(lon));
        }
    }
}

Tensor HashGridEncoder::encode(const Tensor& coords) const {
    check_domain(coords);
    const Index m = features_per_level_;
    Tensor out(coords.rows(), output_dim());
    for (Index r = 0; r < coords.rows(); ++r) {
        const double lat = coords(r, 0);
        const double lon = coords(r, 1);
        for (const GridLevelSpec& level : levels_) {
            const CellFootprint cell = footprint(*this, level, lat, lon);
            const Tensor& table = tables_[static_cast<std::size_t>(level.level)];
            auto tv = table.values();
            const Index base = level.level * m;
            for (Index f = 0; f < m; ++f) {
                double acc = 0.0;
                for (int c = 0; c < 4; ++c) {
                    acc += cell.weights[c] * tv[cell.rows[c] * m + f];
                }
                out(r, base + f) = acc;
            }
        }
    }
    return out;
}

void HashGridEncoder::encode_backward(const Tensor& coords, const Tensor& upstream) const {
    check_domain(coords);
    const Index m = features_per_level_;
    if (upstream.rows() != coords.rows() || upstream.cols() != output_dim()) {
        throw DimensionError("upstream gradient shape [" + std::to_string(upstream.rows()) +
                             " x " + std::to_string(upstream.cols()) +
                             "] does not match encode output [" +
                             std::to_string(coords.rows()) + " x " +
                             std::to_string(output_dim()) + "]");
    }
    for (Index r = 0; r < coords.rows(); ++r) {
        const double lat = coords(r, 0);
        const double lon = coords(r, 1);
        for (const GridLevelSpec& level : levels_) {
            const CellFootprint cell = footprint(*this, level, lat, lon);
            Tensor table = tables_[static_cast<std::size_t>(level.level)];
            auto tg = table.grad();
            const Index base = level.level * m;
            for (Index f = 0; f < m; ++f) {
                const double up = upstream(r, base + f);
                for (int c = 0; c < 4; ++c) {
                    tg[cell.rows[c] * m + f] += cell.weights[c] * up;
                }
            }
        }
    }
}

Tensor HashGridEncoder::encode(Graph& g, const Tensor& coords) const {
    Tensor out = encode(coords);
    out.set_requires_grad(true);
    if (g.recording()) {
        const HashGridEncoder* self = this;
        g.record([self, coords = coords, out = out]() mutable {
            self->encode_backward(coords, Tensor(out.rows(), out.cols(),
                                                 {out.grad().begin(), out.grad().end()}));
        });
    }
    return out;
}

Index HashGridEncoder::parameter_count() const {
    Index n = 0;
    for (const Tensor& t : tables_) n += t.size();
    return n;
}

void HashGridEncoder::collect_parameters(const std::string& prefix,
                                         std::vector<NamedParam>& out) const {
    for (const GridLevelSpec& level : levels_) {
        out.push_back({prefix + ".level" + std::to_string(level.level) + ".features",
                       tables_[static_cast<std::size_t>(level.level)]});
    }
}

}  // namespace sdm

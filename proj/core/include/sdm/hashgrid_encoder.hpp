#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/rng.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

struct HashGridConfig {
    double r_min = 8.0;
    double r_max = 128.0;
    Index table_size = 16384;  // max feature rows per level (2^14)
    // Treat the longitude axis as periodic when indexing vertices. Off by
    // default: the reference behaviour keeps the antimeridian seam unstitched.
    bool wrap_lon = false;
};

// Geometric sequence of grid resolutions from r_min to r_max. Endpoints are
// exact; interior levels are r_min * exp((l/(L-1)) * log(r_max/r_min)).
std::vector<double> resolution_schedule(double r_min, double r_max, Index levels);

struct GridLevelSpec {
    Index level = 0;
    double resolution = 0.0;  // raw schedule value
    Index grid_res = 0;       // floor(resolution): cells per axis
    Index table_rows = 0;     // (grid_res+1)^2 when dense, else table_size
    bool dense = false;
};

// Multiresolution feature grid over the normalized [-1,1]^2 domain.
//
// Each level lays a (grid_res+1)^2 vertex lattice over the domain and stores
// one learned feature row per vertex -- directly when the lattice fits in the
// table (dense) and through the xor hash otherwise. encode() bilinearly
// interpolates the four cell corners per level and concatenates levels
// left-to-right, coarse to fine. The upper domain boundary belongs to the
// last cell, so lat=1/lon=1 are valid inputs, not edge cases.
class HashGridEncoder {
  public:
    static constexpr std::uint64_t kHashMul1 = 1ull;
    static constexpr std::uint64_t kHashMul2 = 2654435761ull;

    HashGridEncoder(const HashGridConfig& config, Index levels,
                    Index features_per_level, Rng& init_rng);

    // Row index of lattice vertex (i, j) in a level's feature table;
    // i indexes latitude, j longitude, both in [0, grid_res].
    Index vertex_index(const GridLevelSpec& level, Index i, Index j) const;

    // Plain forward: [n x 2] coords -> [n x levels*features_per_level].
    Tensor encode(const Tensor& coords) const;

    // Recorded forward: backward scatters into the feature tables' grads
    // through the exact adjoint of the interpolation.
    Tensor encode(Graph& g, const Tensor& coords) const;

    // The adjoint itself: accumulate upstream^T-weighted interpolation
    // weights into each touched table row's grad buffer.
    void encode_backward(const Tensor& coords, const Tensor& upstream) const;

    const std::vector<GridLevelSpec>& levels() const { return levels_; }
    Tensor features(Index level) const { return tables_[level]; }
    const HashGridConfig& config() const { return config_; }

    Index level_count() const { return static_cast<Index>(levels_.size()); }
    Index features_per_level() const { return features_per_level_; }
    Index output_dim() const { return level_count() * features_per_level_; }
    Index parameter_count() const;

    void collect_parameters(const std::string& prefix,
                            std::vector<NamedParam>& out) const;

  private:
    HashGridConfig config_;
    Index features_per_level_ = 0;
    std::vector<GridLevelSpec> levels_;
    std::vector<Tensor> tables_;  // one [table_rows x features_per_level] per level
};

}  // namespace sdm

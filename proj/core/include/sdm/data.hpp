#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdm/rng.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

// Species-id <-> dense-index mapping. Indices are assigned contiguously from
// 0 in insertion order, so a vocab built from a file is reproducible.
class SpeciesVocab {
  public:
    // Returns the existing index or assigns the next free one.
    int add(const std::string& id);
    // Index of `id`, or -1 when absent.
    int lookup(const std::string& id) const;
    const std::string& id_of(int index) const;
    Index size() const { return static_cast<Index>(ids_.size()); }
    const std::vector<std::string>& ids() const { return ids_; }

  private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, int> index_;
};

// Presence-only records: row i of coords is the normalized (lat, lon) of one
// observation of species[i]. Coordinates live in [-1,1]^2.
struct ObservationSet {
    Tensor coords{0, 2};
    std::vector<int> species;
    SpeciesVocab vocab;
    std::string provenance;

    Index size() const { return coords.rows(); }
};

// Column names expected in an observation CSV header.
struct ColumnSchema {
    std::string lat = "lat";
    std::string lon = "lon";
    std::string taxon = "taxon_id";
};

// One rejected input row and why it was dropped.
struct RejectedRow {
    long line = 0;  // 1-based line number in the file
    std::string reason;
};

struct LoadReport {
    long accepted = 0;
    std::vector<RejectedRow> rejected;
};

// Reads a comma-separated observation file with a header row. Latitude is in
// degrees [-90,90] (normalized by /90), longitude in degrees [-180,180]
// (normalized by /180). Malformed rows are skipped and listed in `report`
// with their line numbers; structural problems (unreadable file, missing
// header columns) throw IoError.
ObservationSet load_observations(const std::string& path,
                                 const ColumnSchema& schema = {},
                                 LoadReport* report = nullptr);

// Keeps only the observations of the listed species, renumbered contiguously
// in `keep` order. Unknown ids throw ParameterError.
ObservationSet subset_species(const ObservationSet& data,
                              const std::vector<std::string>& keep);

// A ground-truth region over the normalized [-1,1]^2 domain, built from a
// small closed grammar: Gaussian-density superlevel sets ("blobs") and
// half-plane / stripe cuts, composed with union, intersection and complement.
class Region {
  public:
    // Points where exp(-((lat-c_lat)^2/sig_lat^2 + (lon-c_lon)^2/sig_lon^2)/2)
    // reaches `threshold`: an axis-aligned elliptical disk.
    static Region blob(double center_lat, double center_lon, double sigma_lat,
                       double sigma_lon, double threshold = 0.5);
    // a*lat + b*lon >= c.
    static Region halfplane(double a, double b, double c);
    // lo <= a*lat + b*lon < hi.
    static Region stripe(double a, double b, double lo, double hi);
    // Repeating bands: the fractional position of (a*lat + b*lon - phase)
    // within each `period` falls below `duty`.
    static Region periodic_stripes(double a, double b, double period,
                                   double duty, double phase = 0.0);
    // Alternating squares of side `cell`, anchored at the domain origin:
    // cells whose lat- and lon-band parities agree.
    static Region checkerboard(double cell);

    Region operator|(const Region& other) const;
    Region operator&(const Region& other) const;
    Region operator!() const;

    bool contains(double lat, double lon) const { return predicate_(lat, lon); }

  private:
    explicit Region(std::function<bool(double, double)> predicate)
        : predicate_(std::move(predicate)) {}

    std::function<bool(double, double)> predicate_;
};

// Exact presence labels for one species over a regular evaluation grid.
// Row r, column c covers a cell of the (lat, lon) rectangle; row 0 is the
// lowest latitude. labels and mask are row-major {0,1} bytes; only cells
// with mask==1 take part in evaluation.
struct RangeRaster {
    std::string species_id;
    int species_index = -1;  // index in the generating vocab; -1 when unknown
    Index rows = 0;
    Index cols = 0;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> mask;
    double lat_lo = -1.0, lat_hi = 1.0;
    double lon_lo = -1.0, lon_hi = 1.0;

    double cell_center_lat(Index r) const {
        return lat_lo + (static_cast<double>(r) + 0.5) * (lat_hi - lat_lo) /
                            static_cast<double>(rows);
    }
    double cell_center_lon(Index c) const {
        return lon_lo + (static_cast<double>(c) + 0.5) * (lon_hi - lon_lo) /
                            static_cast<double>(cols);
    }
    Index valid_count() const;
    Index positive_count() const;  // positives among valid cells
};

// Writes / reads the plain-text raster format:
//   SDMRASTER 1
//   species <id>
//   dims <rows> <cols>
//   bounds <lat_lo> <lat_hi> <lon_lo> <lon_hi>
//   data
//   <rows lines of cols characters: '1' present, '0' absent, '.' masked-out>
void save_raster(const RangeRaster& raster, const std::string& path);
RangeRaster load_raster(const std::string& path);

// Loads every *.raster file in a directory, sorted by filename.
std::vector<RangeRaster> load_rasters(const std::string& dir);

// Adapter for evaluation data packaged as numpy arrays: a directory holding
//   species.csv  -- one species id per line, raster order
//   labels.npy   -- uint8/bool array of shape (species, rows, cols), C order
//   mask.npy     -- optional uint8/bool (rows, cols) validity mask
// Bounds are assumed to be the full [-1,1]^2 domain. Best-effort: only the
// plain v1/v2 .npy layout with 1-byte dtypes is understood.
std::vector<RangeRaster> load_packaged_rasters(const std::string& dir);

// One synthetic species: a ground-truth region plus which family it belongs
// to (smooth blob vs sharp-boundary), used when reporting per-family metrics.
struct SyntheticSpeciesSpec {
    std::string id;
    Region region;
    bool sharp = false;
};

// A full synthetic task: species roster, sampling effort, raster resolution.
struct SyntheticSpec {
    std::vector<SyntheticSpeciesSpec> species;
    Index observations_per_species = 500;
    Index raster_rows = 100;
    Index raster_cols = 100;
    // Rejection-sampling budget per observation before the region is declared
    // degenerate (area too small to hit).
    Index max_attempts_per_point = 65536;

    // The default desk-scale task: 10 smooth blob species and 10
    // sharp-boundary species (half-planes, stripes, periodic bands, a
    // checkerboard and its complement) over the full domain.
    static SyntheticSpec default_desk_scale();

    // Side length of the checkerboard squares used by the default roster and
    // by the high-frequency probe field.
    static constexpr double kCheckerCell = 0.03125;
};

// Samples `observations_per_species` presence points uniformly from each
// species' region (seeded rejection sampling) and rasterizes exact membership
// labels on the evaluation grid. Observations are grouped by species in
// roster order; training shuffles them later.
std::pair<ObservationSet, std::vector<RangeRaster>> generate_synthetic(
    const SyntheticSpec& spec, Rng& rng);

}  // namespace sdm

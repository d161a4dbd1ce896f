#include "sdm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdm/errors.hpp"

namespace sdm {
namespace {

std::string trimmed(const std::string& s) {
    size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    while (true) {
        std::string::size_type comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(trimmed(line.substr(start)));
            break;
        }
        fields.push_back(trimmed(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

// Strict full-token parse; returns false on trailing junk or empty input.
bool parse_double(const std::string& token, double& out) {
    if (token.empty()) return false;
    const char* first = token.data();
    const char* last = first + token.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

int SpeciesVocab::add(const std::string& id) {
    auto it = index_.find(id);
    if (it != index_.end()) return it->second;
    int assigned = static_cast<int>(ids_.size());
    ids_.push_back(id);
    index_.emplace(id, assigned);
    return assigned;
}

int SpeciesVocab::lookup(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

const std::string& SpeciesVocab::id_of(int index) const {
    if (index < 0 || index >= static_cast<int>(ids_.size())) {
        throw ParameterError("species index " + std::to_string(index) +
                             " outside vocab of size " +
                             std::to_string(ids_.size()));
    }
    return ids_[static_cast<size_t>(index)];
}

ObservationSet load_observations(const std::string& path,
                                 const ColumnSchema& schema,
                                 LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open observation file: " + path);

    std::string header;
    if (!std::getline(in, header)) {
        throw IoError(path + ": empty file, expected a CSV header row");
    }
    std::vector<std::string> columns = split_csv_line(header);
    auto column_of = [&](const std::string& name) {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) {
            throw IoError(path + ": header is missing column '" + name + "'");
        }
        return static_cast<size_t>(it - columns.begin());
    };
    size_t lat_col = column_of(schema.lat);
    size_t lon_col = column_of(schema.lon);
    size_t taxon_col = column_of(schema.taxon);

    LoadReport local;
    LoadReport& rep = report ? *report : local;
    std::vector<double> coords;
    std::vector<int> species;
    SpeciesVocab vocab;

    std::string line;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        auto reject = [&](const std::string& reason) {
            rep.rejected.push_back({line_no, reason});
        };
        if (fields.size() != columns.size()) {
            reject("expected " + std::to_string(columns.size()) +
                   " fields, got " + std::to_string(fields.size()));
            continue;
        }
        double lat_deg = 0.0, lon_deg = 0.0;
        if (!parse_double(fields[lat_col], lat_deg)) {
            reject("unparseable latitude '" + fields[lat_col] + "'");
            continue;
        }
        if (!parse_double(fields[lon_col], lon_deg)) {
            reject("unparseable longitude '" + fields[lon_col] + "'");
            continue;
        }
        if (lat_deg < -90.0 || lat_deg > 90.0) {
            reject("latitude outside [-90,90]: " + fields[lat_col]);
            continue;
        }
        if (lon_deg < -180.0 || lon_deg > 180.0) {
            reject("longitude outside [-180,180]: " + fields[lon_col]);
            continue;
        }
        if (fields[taxon_col].empty()) {
            reject("empty taxon id");
            continue;
        }
        coords.push_back(lat_deg / 90.0);
        coords.push_back(lon_deg / 180.0);
        species.push_back(vocab.add(fields[taxon_col]));
        ++rep.accepted;
    }

    ObservationSet out;
    out.coords = Tensor(static_cast<Index>(species.size()), 2, std::move(coords));
    out.species = std::move(species);
    out.vocab = std::move(vocab);
    out.provenance = "csv:" + path;
    return out;
}

ObservationSet subset_species(const ObservationSet& data,
                              const std::vector<std::string>& keep) {
    SpeciesVocab vocab;
    std::vector<int> remap(static_cast<size_t>(data.vocab.size()), -1);
    for (const std::string& id : keep) {
        int old_index = data.vocab.lookup(id);
        if (old_index < 0) {
            throw ParameterError("subset_species: unknown species '" + id + "'");
        }
        if (remap[static_cast<size_t>(old_index)] != -1) {
            throw ParameterError("subset_species: duplicate species '" + id + "'");
        }
        remap[static_cast<size_t>(old_index)] = vocab.add(id);
    }

    std::vector<double> coords;
    std::vector<int> species;
    for (Index i = 0; i < data.size(); ++i) {
        int mapped = remap[static_cast<size_t>(data.species[static_cast<size_t>(i)])];
        if (mapped < 0) continue;
        coords.push_back(data.coords(i, 0));
        coords.push_back(data.coords(i, 1));
        species.push_back(mapped);
    }

    ObservationSet out;
    out.coords = Tensor(static_cast<Index>(species.size()), 2, std::move(coords));
    out.species = std::move(species);
    out.vocab = std::move(vocab);
    out.provenance = data.provenance + ";subset=" + std::to_string(keep.size());
    return out;
}

Region Region::blob(double center_lat, double center_lon, double sigma_lat,
                    double sigma_lon, double threshold) {
    if (sigma_lat <= 0.0 || sigma_lon <= 0.0) {
        throw ParameterError("blob sigmas must be positive");
    }
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw ParameterError("blob threshold must lie in (0,1)");
    }
    return Region([=](double lat, double lon) {
        double dlat = (lat - center_lat) / sigma_lat;
        double dlon = (lon - center_lon) / sigma_lon;
        return std::exp(-0.5 * (dlat * dlat + dlon * dlon)) >= threshold;
    });
}

Region Region::halfplane(double a, double b, double c) {
    if (a == 0.0 && b == 0.0) {
        throw ParameterError("halfplane normal (a,b) must be nonzero");
    }
    return Region([=](double lat, double lon) { return a * lat + b * lon >= c; });
}

Region Region::stripe(double a, double b, double lo, double hi) {
    if (a == 0.0 && b == 0.0) {
        throw ParameterError("stripe normal (a,b) must be nonzero");
    }
    if (!(lo < hi)) throw ParameterError("stripe needs lo < hi");
    return Region([=](double lat, double lon) {
        double s = a * lat + b * lon;
        return lo <= s && s < hi;
    });
}

Region Region::periodic_stripes(double a, double b, double period, double duty,
                                double phase) {
    if (a == 0.0 && b == 0.0) {
        throw ParameterError("periodic_stripes normal (a,b) must be nonzero");
    }
    if (period <= 0.0) throw ParameterError("periodic_stripes period must be positive");
    if (duty <= 0.0 || duty >= 1.0) {
        throw ParameterError("periodic_stripes duty must lie in (0,1)");
    }
    return Region([=](double lat, double lon) {
        double q = (a * lat + b * lon - phase) / period;
        double frac = q - std::floor(q);
        return frac < duty;
    });
}

Region Region::checkerboard(double cell) {
    if (cell <= 0.0) throw ParameterError("checkerboard cell must be positive");
    Region lat_bands = periodic_stripes(1.0, 0.0, 2.0 * cell, 0.5);
    Region lon_bands = periodic_stripes(0.0, 1.0, 2.0 * cell, 0.5);
    // Squares where the two band parities agree.
    return (lat_bands & lon_bands) | ((!lat_bands) & (!lon_bands));
}

Region Region::operator|(const Region& other) const {
    auto a = predicate_, b = other.predicate_;
    return Region([a, b](double lat, double lon) {
        return a(lat, lon) || b(lat, lon);
    });
}

Region Region::operator&(const Region& other) const {
    auto a = predicate_, b = other.predicate_;
    return Region([a, b](double lat, double lon) {
        return a(lat, lon) && b(lat, lon);
    });
}

Region Region::operator!() const {
    auto a = predicate_;
    return Region([a](double lat, double lon) { return !a(lat, lon); });
}

Index RangeRaster::valid_count() const {
    Index n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
}

Index RangeRaster::positive_count() const {
    Index n = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        n += (mask[i] != 0 && labels[i] != 0);
    }
    return n;
}

void save_raster(const RangeRaster& raster, const std::string& path) {
    size_t cells = static_cast<size_t>(raster.rows) * static_cast<size_t>(raster.cols);
    if (raster.rows <= 0 || raster.cols <= 0 || raster.labels.size() != cells ||
        raster.mask.size() != cells) {
        throw ParameterError("save_raster: inconsistent raster shape for '" +
                             raster.species_id + "'");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open raster file for writing: " + path);
    char bounds[128];
    std::snprintf(bounds, sizeof(bounds), "%.17g %.17g %.17g %.17g",
                  raster.lat_lo, raster.lat_hi, raster.lon_lo, raster.lon_hi);
    out << "SDMRASTER 1\n"
        << "species " << raster.species_id << "\n"
        << "dims " << raster.rows << " " << raster.cols << "\n"
        << "bounds " << bounds << "\n"
        << "data\n";
    std::string row(static_cast<size_t>(raster.cols), '0');
    for (Index r = 0; r < raster.rows; ++r) {
        for (Index c = 0; c < raster.cols; ++c) {
            size_t at = static_cast<size_t>(r * raster.cols + c);
            row[static_cast<size_t>(c)] =
                raster.mask[at] == 0 ? '.' : (raster.labels[at] != 0 ? '1' : '0');
        }
        out << row << "\n";
    }
    if (!out) throw IoError("write failed for raster file: " + path);
}

RangeRaster load_raster(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open raster file: " + path);
    auto fail = [&](long line, const std::string& what) -> IoError {
        return IoError(path + ":" + std::to_string(line) + ": " + what);
    };

    std::string line;
    if (!std::getline(in, line) || trimmed(line) != "SDMRASTER 1") {
        throw fail(1, "expected magic line 'SDMRASTER 1'");
    }
    if (!std::getline(in, line) || line.rfind("species ", 0) != 0) {
        throw fail(2, "expected 'species <id>'");
    }
    RangeRaster raster;
    raster.species_id = trimmed(line.substr(8));
    if (raster.species_id.empty()) throw fail(2, "empty species id");
    if (!std::getline(in, line)) throw fail(3, "expected 'dims <rows> <cols>'");
    {
        std::istringstream dims(line);
        std::string tag;
        if (!(dims >> tag >> raster.rows >> raster.cols) || tag != "dims" ||
            raster.rows <= 0 || raster.cols <= 0) {
            throw fail(3, "expected 'dims <rows> <cols>' with positive dims");
        }
    }
    if (!std::getline(in, line)) throw fail(4, "expected bounds line");
    {
        std::istringstream bounds(line);
        std::string tag;
        if (!(bounds >> tag >> raster.lat_lo >> raster.lat_hi >> raster.lon_lo >>
              raster.lon_hi) ||
            tag != "bounds" || !(raster.lat_lo < raster.lat_hi) ||
            !(raster.lon_lo < raster.lon_hi)) {
            throw fail(4, "expected 'bounds <lat_lo> <lat_hi> <lon_lo> <lon_hi>'");
        }
    }
    if (!std::getline(in, line) || trimmed(line) != "data") {
        throw fail(5, "expected 'data' marker");
    }

    size_t cells = static_cast<size_t>(raster.rows) * static_cast<size_t>(raster.cols);
    raster.labels.assign(cells, 0);
    raster.mask.assign(cells, 0);
    for (Index r = 0; r < raster.rows; ++r) {
        long line_no = 6 + static_cast<long>(r);
        if (!std::getline(in, line)) throw fail(line_no, "missing raster row");
        std::string row = trimmed(line);
        if (static_cast<Index>(row.size()) != raster.cols) {
            throw fail(line_no, "row has " + std::to_string(row.size()) +
                                    " cells, expected " + std::to_string(raster.cols));
        }
        for (Index c = 0; c < raster.cols; ++c) {
            size_t at = static_cast<size_t>(r * raster.cols + c);
            switch (row[static_cast<size_t>(c)]) {
                case '1': raster.labels[at] = 1; raster.mask[at] = 1; break;
                case '0': raster.mask[at] = 1; break;
                case '.': break;
                default:
                    throw fail(line_no, std::string("invalid cell character '") +
                                            row[static_cast<size_t>(c)] + "'");
            }
        }
    }
    return raster;
}

std::vector<RangeRaster> load_rasters(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw IoError("raster directory not found: " + dir);
    }
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".raster") {
            paths.push_back(entry.path().string());
        }
    }
    std::sort(paths.begin(), paths.end());
    std::vector<RangeRaster> rasters;
    rasters.reserve(paths.size());
    for (const std::string& path : paths) rasters.push_back(load_raster(path));
    return rasters;
}

namespace {

struct NpyArray {
    std::vector<Index> shape;
    std::vector<std::uint8_t> bytes;
};

// Minimal reader for C-ordered .npy arrays with 1-byte dtypes.
NpyArray load_npy_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open array file: " + path);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    auto fail = [&](const std::string& what) -> IoError {
        return IoError(path + ": " + what);
    };

    static const char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
    if (raw.size() < 10 || std::memcmp(raw.data(), kMagic, 6) != 0) {
        throw fail("not a .npy file");
    }
    unsigned major = static_cast<unsigned char>(raw[6]);
    size_t header_start = 0;
    size_t header_len = 0;
    if (major == 1) {
        std::uint16_t len16 = 0;
        std::memcpy(&len16, raw.data() + 8, 2);
        header_start = 10;
        header_len = len16;
    } else if (major == 2) {
        if (raw.size() < 12) throw fail("truncated header");
        std::uint32_t len32 = 0;
        std::memcpy(&len32, raw.data() + 8, 4);
        header_start = 12;
        header_len = len32;
    } else {
        throw fail("unsupported .npy version " + std::to_string(major));
    }
    if (raw.size() < header_start + header_len) throw fail("truncated header");
    std::string header(raw.data() + header_start, header_len);

    auto quoted_value = [&](const std::string& key) {
        size_t at = header.find("'" + key + "'");
        if (at == std::string::npos) throw fail("header lacks '" + key + "'");
        size_t open = header.find('\'', header.find(':', at));
        size_t close = header.find('\'', open + 1);
        if (open == std::string::npos || close == std::string::npos) {
            throw fail("malformed header value for '" + key + "'");
        }
        return header.substr(open + 1, close - open - 1);
    };
    std::string descr = quoted_value("descr");
    if (descr != "|u1" && descr != "|b1" && descr != "|i1") {
        throw fail("unsupported dtype '" + descr + "', expected a 1-byte type");
    }
    if (header.find("'fortran_order': False") == std::string::npos) {
        throw fail("only C-ordered arrays are supported");
    }

    size_t shape_at = header.find("'shape'");
    if (shape_at == std::string::npos) throw fail("header lacks 'shape'");
    size_t open = header.find('(', shape_at);
    size_t close = header.find(')', open);
    if (open == std::string::npos || close == std::string::npos) {
        throw fail("malformed shape tuple");
    }
    NpyArray array;
    size_t total = 1;
    std::istringstream dims(header.substr(open + 1, close - open - 1));
    std::string token;
    while (std::getline(dims, token, ',')) {
        token = trimmed(token);
        if (token.empty()) continue;  // trailing comma of 1-tuples
        long long dim = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), dim);
        if (ec != std::errc() || ptr != token.data() + token.size() || dim < 0) {
            throw fail("malformed shape dimension '" + token + "'");
        }
        array.shape.push_back(static_cast<Index>(dim));
        total *= static_cast<size_t>(dim);
    }
    if (raw.size() != header_start + header_len + total) {
        throw fail("payload size does not match shape");
    }
    const char* payload = raw.data() + header_start + header_len;
    array.bytes.assign(payload, payload + total);
    return array;
}

}  // namespace

std::vector<RangeRaster> load_packaged_rasters(const std::string& dir) {
    namespace fs = std::filesystem;
    std::string species_path = (fs::path(dir) / "species.csv").string();
    std::ifstream species_in(species_path);
    if (!species_in) throw IoError("cannot open species list: " + species_path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(species_in, line)) {
        std::string id = trimmed(line);
        if (!id.empty()) ids.push_back(id);
    }
    if (ids.empty()) throw IoError(species_path + ": no species listed");

    NpyArray labels = load_npy_bytes((fs::path(dir) / "labels.npy").string());
    if (labels.shape.size() != 3 ||
        labels.shape[0] != static_cast<Index>(ids.size())) {
        throw IoError(dir + "/labels.npy: expected shape (species, rows, cols) "
                            "with species = " + std::to_string(ids.size()));
    }
    Index rows = labels.shape[1], cols = labels.shape[2];
    size_t cells = static_cast<size_t>(rows) * static_cast<size_t>(cols);

    std::vector<std::uint8_t> mask(cells, 1);
    std::string mask_path = (fs::path(dir) / "mask.npy").string();
    if (fs::exists(mask_path)) {
        NpyArray loaded = load_npy_bytes(mask_path);
        if (loaded.shape.size() != 2 || loaded.shape[0] != rows ||
            loaded.shape[1] != cols) {
            throw IoError(mask_path + ": mask shape must match labels");
        }
        for (size_t i = 0; i < cells; ++i) mask[i] = loaded.bytes[i] != 0;
    }

    std::vector<RangeRaster> rasters;
    rasters.reserve(ids.size());
    for (size_t s = 0; s < ids.size(); ++s) {
        RangeRaster raster;
        raster.species_id = ids[s];
        raster.rows = rows;
        raster.cols = cols;
        raster.labels.resize(cells);
        raster.mask = mask;
        const std::uint8_t* plane = labels.bytes.data() + s * cells;
        for (size_t i = 0; i < cells; ++i) raster.labels[i] = plane[i] != 0;
        rasters.push_back(std::move(raster));
    }
    return rasters;
}

SyntheticSpec SyntheticSpec::default_desk_scale() {
    SyntheticSpec spec;
    auto smooth = [&](std::string id, Region region) {
        spec.species.push_back({std::move(id), std::move(region), false});
    };
    auto sharp = [&](std::string id, Region region) {
        spec.species.push_back({std::move(id), std::move(region), true});
    };

    // Smooth family: elliptical superlevel sets at varied positions/scales.
    smooth("blob_nw", Region::blob(0.5, -0.5, 0.35, 0.35));
    smooth("blob_se", Region::blob(-0.45, 0.55, 0.3, 0.3));
    smooth("blob_center_wide", Region::blob(0.0, 0.0, 0.6, 0.6));
    smooth("blob_tall", Region::blob(0.1, -0.2, 0.55, 0.2));
    smooth("blob_flat", Region::blob(-0.6, -0.1, 0.18, 0.5));
    smooth("blob_pair", Region::blob(0.55, 0.55, 0.22, 0.22) |
                            Region::blob(-0.55, -0.55, 0.22, 0.22));
    smooth("blob_trio", Region::blob(0.7, -0.7, 0.18, 0.18) |
                            Region::blob(0.0, 0.6, 0.2, 0.2) |
                            Region::blob(-0.7, 0.1, 0.22, 0.22));
    smooth("blob_annulus", Region::blob(0.0, 0.0, 0.55, 0.55) &
                               !Region::blob(0.0, 0.0, 0.28, 0.28));
    smooth("blob_east", Region::blob(0.15, 0.75, 0.3, 0.45));
    smooth("blob_south", Region::blob(-0.75, 0.0, 0.4, 0.25));

    // Sharp-boundary family: straight cuts, bands, and the checkerboard pair
    // whose squares sit below the smooth encoder's representable frequencies.
    sharp("half_east", Region::halfplane(0.0, 1.0, 0.0));
    sharp("half_diag", Region::halfplane(1.0, 1.0, 0.2));
    sharp("stripe_mid", Region::stripe(1.0, 0.0, -0.25, 0.25));
    sharp("stripe_diag", Region::stripe(1.0, -1.0, 0.1, 0.8));
    sharp("bands_lon", Region::periodic_stripes(0.0, 1.0, 0.5, 0.5));
    sharp("bands_diag_fine", Region::periodic_stripes(1.0, 1.0, 0.25, 0.5));
    sharp("blob_cut", Region::blob(0.2, 0.2, 0.5, 0.5) &
                          Region::halfplane(0.0, 1.0, 0.2));
    sharp("quadrants", Region::checkerboard(1.0));
    sharp("checker", Region::checkerboard(kCheckerCell));
    sharp("checker_inv", !Region::checkerboard(kCheckerCell));
    return spec;
}

std::pair<ObservationSet, std::vector<RangeRaster>> generate_synthetic(
    const SyntheticSpec& spec, Rng& rng) {
    if (spec.species.empty()) throw ParameterError("synthetic spec lists no species");
    if (spec.observations_per_species < 1) {
        throw ParameterError("observations_per_species must be >= 1");
    }
    if (spec.raster_rows < 1 || spec.raster_cols < 1) {
        throw ParameterError("raster dims must be >= 1");
    }

    ObservationSet data;
    for (const SyntheticSpeciesSpec& sp : spec.species) {
        if (data.vocab.lookup(sp.id) != -1) {
            throw ParameterError("duplicate synthetic species id '" + sp.id + "'");
        }
        data.vocab.add(sp.id);
    }

    std::vector<double> coords;
    coords.reserve(static_cast<size_t>(spec.species.size()) *
                   static_cast<size_t>(spec.observations_per_species) * 2);
    std::vector<int> species_of_row;
    for (size_t k = 0; k < spec.species.size(); ++k) {
        const SyntheticSpeciesSpec& sp = spec.species[k];
        for (Index n = 0; n < spec.observations_per_species; ++n) {
            bool placed = false;
            for (Index attempt = 0; attempt < spec.max_attempts_per_point; ++attempt) {
                double lat = rng.uniform(-1.0, 1.0);
                double lon = rng.uniform(-1.0, 1.0);
                if (sp.region.contains(lat, lon)) {
                    coords.push_back(lat);
                    coords.push_back(lon);
                    species_of_row.push_back(static_cast<int>(k));
                    placed = true;
                    break;
                }
            }
            if (!placed) {
                throw GenerationError(
                    "species '" + sp.id + "': no presence point found in " +
                    std::to_string(spec.max_attempts_per_point) +
                    " attempts; region area is below the sampling floor");
            }
        }
    }
    data.coords = Tensor(static_cast<Index>(species_of_row.size()), 2,
                         std::move(coords));
    data.species = std::move(species_of_row);
    data.provenance = "synthetic:" + std::to_string(spec.species.size()) +
                      "sp x" + std::to_string(spec.observations_per_species);

    std::vector<RangeRaster> rasters;
    rasters.reserve(spec.species.size());
    size_t cells = static_cast<size_t>(spec.raster_rows) *
                   static_cast<size_t>(spec.raster_cols);
    for (size_t k = 0; k < spec.species.size(); ++k) {
        RangeRaster raster;
        raster.species_id = spec.species[k].id;
        raster.species_index = static_cast<int>(k);
        raster.rows = spec.raster_rows;
        raster.cols = spec.raster_cols;
        raster.labels.resize(cells);
        raster.mask.assign(cells, 1);
        for (Index r = 0; r < raster.rows; ++r) {
            double lat = raster.cell_center_lat(r);
            for (Index c = 0; c < raster.cols; ++c) {
                raster.labels[static_cast<size_t>(r * raster.cols + c)] =
                    spec.species[k].region.contains(lat, raster.cell_center_lon(c));
            }
        }
        rasters.push_back(std::move(raster));
    }
    return {std::move(data), std::move(rasters)};
}

}  // namespace sdm

// sdm: train / eval / sweep / export / synth for hybrid location encoders.
//
// One JSON run config drives every subcommand. --set key=value rewrites any
// config field, and the convenience flags (--seed, --out-dir, --jobs,
// --metrics) override last. All randomness flows from train.seed through
// named substreams, so a config + seed pins every output except wall-clock
// timings. Exit codes: 0 success, 1 invalid config or flags, 2 runtime
// failure, 3 I/O failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdm/checkpoint.hpp"
#include "sdm/data.hpp"
#include "sdm/errors.hpp"
#include "sdm/evaluation.hpp"
#include "sdm/timing.hpp"
#include "sdm/training.hpp"

using nlohmann::json;
using namespace sdm;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kIo = 3;

// First line is machine-parseable JSON, second is for humans.
int report_failure(int code, const char* kind, const std::string& detail) {
    const json line = {{"error", kind}, {"exit", code}, {"detail", detail}};
    std::cerr << line.dump() << "\n";
    std::cerr << "error: " << detail << "\n";
    return code;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---- config schema -------------------------------------------------------

std::string join_key(const std::string& scope, const std::string& key) {
    return scope.empty() ? key : scope + "." + key;
}

void require_known_keys(const json& obj, const std::string& scope,
                        std::initializer_list<const char*> known) {
    for (const auto& [key, value] : obj.items()) {
        bool recognized = false;
        for (const char* k : known) recognized = recognized || key == k;
        if (!recognized) {
            throw ParameterError("unknown config key '" + join_key(scope, key) + "'");
        }
    }
}

const json& object_field(const json& obj, const std::string& scope, const char* key) {
    const json& value = obj.at(key);
    if (!value.is_object()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be an object");
    }
    return value;
}

double get_number(const json& obj, const std::string& scope, const char* key,
                  double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& value = obj.at(key);
    if (!value.is_number()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be a number");
    }
    return value.get<double>();
}

Index get_integer(const json& obj, const std::string& scope, const char* key,
                  Index fallback) {
    if (!obj.contains(key)) return fallback;
    const json& value = obj.at(key);
    if (!value.is_number_integer()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be an integer");
    }
    return value.get<Index>();
}

std::uint64_t get_u64(const json& obj, const std::string& scope, const char* key,
                      std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& value = obj.at(key);
    if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() &&
                                       value.get<std::int64_t>() < 0)) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be a non-negative integer");
    }
    return value.get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& scope, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& value = obj.at(key);
    if (!value.is_boolean()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be a boolean");
    }
    return value.get<bool>();
}

std::string get_string(const json& obj, const std::string& scope, const char* key,
                       std::string fallback) {
    if (!obj.contains(key)) return fallback;
    const json& value = obj.at(key);
    if (!value.is_string()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be a string");
    }
    return value.get<std::string>();
}

const json& array_field(const json& obj, const std::string& scope, const char* key) {
    const json& value = obj.at(key);
    if (!value.is_array() || value.empty()) {
        throw ParameterError("config key '" + join_key(scope, key) +
                             "' must be a non-empty array");
    }
    return value;
}

// ---- run config ------------------------------------------------------------

struct DataSpec {
    std::string observations;  // CSV of lat,lon,taxon_id
    std::string rasters;       // directory of .raster range maps
    bool synthetic = false;    // generate the built-in task instead of loading
    Index observations_per_species = 500;
    Index raster_rows = 100;
    Index raster_cols = 100;
};

struct EvalSpec {
    std::vector<std::string> metrics = {"map"};
    Index grid_points = 101;        // recall grid for prc
    Index probe_points = 4096;      // embedding probe sample for r2
    Index timing_repetitions = 2;   // benchmark_timing reps
    std::string checkpoint;
};

struct SweepGrid {
    std::vector<double> implicitness = {0.5};
    std::vector<double> learning_rates = {1e-3};
    std::vector<Index> obs_caps;  // empty -> single uncapped pass
    std::vector<std::uint64_t> seeds = {0};
    bool per_species_rows = false;
};

struct RunConfig {
    TrainConfig train;
    DataSpec data;
    EvalSpec eval;
    SweepGrid sweep;
    std::string out_dir;
};

TrainConfig parse_train_config(const json& obj, const std::string& scope) {
    require_known_keys(obj, scope,
                       {"epochs", "learning_rate", "lambda_pos", "batch_size", "dropout_p",
                        "seed", "implicitness", "total_dim", "features_per_level", "grid",
                        "obs_cap"});
    TrainConfig config;
    config.epochs = get_integer(obj, scope, "epochs", config.epochs);
    config.learning_rate = get_number(obj, scope, "learning_rate", config.learning_rate);
    config.lambda_pos = get_number(obj, scope, "lambda_pos", config.lambda_pos);
    config.batch_size = get_integer(obj, scope, "batch_size", config.batch_size);
    config.dropout_p = get_number(obj, scope, "dropout_p", config.dropout_p);
    config.seed = get_u64(obj, scope, "seed", config.seed);
    config.implicitness = get_number(obj, scope, "implicitness", config.implicitness);
    config.total_dim = get_integer(obj, scope, "total_dim", config.total_dim);
    config.features_per_level =
        get_integer(obj, scope, "features_per_level", config.features_per_level);
    if (obj.contains("grid")) {
        const json& grid = object_field(obj, scope, "grid");
        const std::string grid_scope = join_key(scope, "grid");
        require_known_keys(grid, grid_scope, {"r_min", "r_max", "table_size", "wrap_lon"});
        config.grid.r_min = get_number(grid, grid_scope, "r_min", config.grid.r_min);
        config.grid.r_max = get_number(grid, grid_scope, "r_max", config.grid.r_max);
        config.grid.table_size =
            get_integer(grid, grid_scope, "table_size", config.grid.table_size);
        config.grid.wrap_lon = get_bool(grid, grid_scope, "wrap_lon", config.grid.wrap_lon);
    }
    if (obj.contains("obs_cap") && !obj.at("obs_cap").is_null()) {
        config.obs_cap = get_integer(obj, scope, "obs_cap", 0);
    }
    return config;
}

DataSpec parse_data_spec(const json& obj) {
    require_known_keys(obj, "data",
                       {"observations", "rasters", "synthetic", "observations_per_species",
                        "raster_rows", "raster_cols"});
    DataSpec spec;
    spec.observations = get_string(obj, "data", "observations", spec.observations);
    spec.rasters = get_string(obj, "data", "rasters", spec.rasters);
    spec.synthetic = get_bool(obj, "data", "synthetic", spec.synthetic);
    spec.observations_per_species =
        get_integer(obj, "data", "observations_per_species", spec.observations_per_species);
    spec.raster_rows = get_integer(obj, "data", "raster_rows", spec.raster_rows);
    spec.raster_cols = get_integer(obj, "data", "raster_cols", spec.raster_cols);
    return spec;
}

EvalSpec parse_eval_spec(const json& obj) {
    require_known_keys(obj, "eval",
                       {"metrics", "grid_points", "probe_points", "timing_repetitions",
                        "checkpoint"});
    EvalSpec spec;
    if (obj.contains("metrics")) {
        spec.metrics.clear();
        for (const json& item : array_field(obj, "eval", "metrics")) {
            if (!item.is_string()) {
                throw ParameterError("config key 'eval.metrics' must hold strings");
            }
            spec.metrics.push_back(item.get<std::string>());
        }
    }
    spec.grid_points = get_integer(obj, "eval", "grid_points", spec.grid_points);
    spec.probe_points = get_integer(obj, "eval", "probe_points", spec.probe_points);
    spec.timing_repetitions =
        get_integer(obj, "eval", "timing_repetitions", spec.timing_repetitions);
    spec.checkpoint = get_string(obj, "eval", "checkpoint", spec.checkpoint);
    return spec;
}

SweepGrid parse_sweep_grid(const json& obj) {
    require_known_keys(obj, "sweep",
                       {"implicitness", "learning_rates", "obs_caps", "seeds",
                        "per_species_rows"});
    SweepGrid grid;
    if (obj.contains("implicitness")) {
        grid.implicitness.clear();
        for (const json& item : array_field(obj, "sweep", "implicitness")) {
            if (!item.is_number()) {
                throw ParameterError("config key 'sweep.implicitness' must hold numbers");
            }
            grid.implicitness.push_back(item.get<double>());
        }
    }
    if (obj.contains("learning_rates")) {
        grid.learning_rates.clear();
        for (const json& item : array_field(obj, "sweep", "learning_rates")) {
            if (!item.is_number()) {
                throw ParameterError("config key 'sweep.learning_rates' must hold numbers");
            }
            grid.learning_rates.push_back(item.get<double>());
        }
    }
    if (obj.contains("obs_caps")) {
        for (const json& item : array_field(obj, "sweep", "obs_caps")) {
            if (!item.is_number_integer()) {
                throw ParameterError("config key 'sweep.obs_caps' must hold integers");
            }
            grid.obs_caps.push_back(item.get<Index>());
        }
    }
    if (obj.contains("seeds")) {
        grid.seeds.clear();
        for (const json& item : array_field(obj, "sweep", "seeds")) {
            if (!item.is_number_integer() || item.get<std::int64_t>() < 0) {
                throw ParameterError(
                    "config key 'sweep.seeds' must hold non-negative integers");
            }
            grid.seeds.push_back(item.get<std::uint64_t>());
        }
    }
    grid.per_species_rows = get_bool(obj, "sweep", "per_species_rows", grid.per_species_rows);
    return grid;
}

// --set train.learning_rate=0.003 style override; the value is parsed as JSON
// when possible and falls back to a plain string.
void apply_override(json& root, const std::string& item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ParameterError("--set expects key=value, got '" + item + "'");
    }
    const std::string path = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }

    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part =
            path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ParameterError("--set key '" + path + "' has an empty segment");
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        json& next = (*node)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) {
            throw ParameterError("--set key '" + path + "' descends into '" + part +
                                 "', which is not an object");
        }
        node = &next;
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    json root = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            throw IoError("cannot open config file '" + config_path + "'");
        }
        try {
            in >> root;
        } catch (const json::exception& error) {
            throw ParameterError("config file '" + config_path +
                                 "' is not valid JSON: " + error.what());
        }
        if (!root.is_object()) {
            throw ParameterError("config file '" + config_path +
                                 "' must hold a JSON object");
        }
    }
    for (const std::string& item : overrides) apply_override(root, item);

    require_known_keys(root, "", {"train", "data", "eval", "sweep", "out_dir"});
    RunConfig run;
    if (root.contains("train")) {
        run.train = parse_train_config(object_field(root, "", "train"), "train");
    }
    if (root.contains("data")) run.data = parse_data_spec(object_field(root, "", "data"));
    if (root.contains("eval")) run.eval = parse_eval_spec(object_field(root, "", "eval"));
    if (root.contains("sweep")) {
        run.sweep = parse_sweep_grid(object_field(root, "", "sweep"));
    }
    run.out_dir = get_string(root, "", "out_dir", "");
    return run;
}

// Every field is checked here, before any data is read or file written.
void validate_run(const RunConfig& run) {
    const TrainConfig& t = run.train;
    if (t.epochs < 1) throw ParameterError("train.epochs must be at least 1");
    if (!(t.learning_rate > 0.0)) {
        throw ParameterError("train.learning_rate must be positive");
    }
    if (!(t.lambda_pos > 0.0)) throw ParameterError("train.lambda_pos must be positive");
    if (t.batch_size < 1) throw ParameterError("train.batch_size must be at least 1");
    if (!(t.dropout_p >= 0.0 && t.dropout_p < 1.0)) {
        throw ParameterError("train.dropout_p must lie in [0, 1)");
    }
    if (t.obs_cap && *t.obs_cap < 1) {
        throw ParameterError("train.obs_cap must be at least 1 when set");
    }
    auto check_plan = [&](double implicitness) {
        const Index features = t.features_per_level > 0
                                   ? t.features_per_level
                                   : default_features_per_level(implicitness);
        const CapacityPlan plan = plan_capacity(implicitness, t.total_dim, features);
        if (plan.levels > 0) {
            resolution_schedule(t.grid.r_min, t.grid.r_max, plan.levels);
            if (t.grid.table_size < 1) {
                throw ParameterError("train.grid.table_size must be at least 1");
            }
        }
    };
    check_plan(t.implicitness);

    if (run.data.synthetic && !run.data.observations.empty()) {
        throw ParameterError("data.synthetic and data.observations are mutually exclusive");
    }
    if (run.data.synthetic) {
        if (run.data.observations_per_species < 1) {
            throw ParameterError("data.observations_per_species must be at least 1");
        }
        if (run.data.raster_rows < 1 || run.data.raster_cols < 1) {
            throw ParameterError("data.raster_rows and data.raster_cols must be positive");
        }
    }

    for (const std::string& metric : run.eval.metrics) {
        if (metric != "map" && metric != "prc" && metric != "r2" && metric != "timing") {
            throw ParameterError("unknown metric '" + metric +
                                 "'; expected map, prc, r2, or timing");
        }
    }
    if (run.eval.grid_points < 2) throw ParameterError("eval.grid_points must be at least 2");
    if (run.eval.probe_points < 8) {
        throw ParameterError("eval.probe_points must be at least 8");
    }
    if (run.eval.timing_repetitions < 1) {
        throw ParameterError("eval.timing_repetitions must be at least 1");
    }

    if (run.sweep.implicitness.empty() || run.sweep.learning_rates.empty() ||
        run.sweep.seeds.empty()) {
        throw ParameterError("sweep.implicitness, sweep.learning_rates and sweep.seeds "
                             "must be non-empty");
    }
    for (double implicitness : run.sweep.implicitness) check_plan(implicitness);
    for (Index cap : run.sweep.obs_caps) {
        if (cap < 1) throw ParameterError("sweep.obs_caps entries must be at least 1");
    }
}

// ---- shared plumbing -------------------------------------------------------

std::string resolve_out_dir(const RunConfig& run, const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (!run.out_dir.empty()) return run.out_dir;
    if (const char* env = std::getenv("SDM_OUT_ROOT")) return env;
    return "out";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed while writing '" + path + "'");
}

struct LoadedData {
    ObservationSet observations;
    std::vector<RangeRaster> rasters;
};

SyntheticSpec synthetic_spec_of(const RunConfig& run) {
    SyntheticSpec spec = SyntheticSpec::default_desk_scale();
    spec.observations_per_species = run.data.observations_per_species;
    spec.raster_rows = run.data.raster_rows;
    spec.raster_cols = run.data.raster_cols;
    return spec;
}

LoadedData load_data(const RunConfig& run) {
    LoadedData out;
    if (run.data.synthetic) {
        Rng rng = Rng(run.train.seed).stream("synth");
        auto [observations, rasters] = generate_synthetic(synthetic_spec_of(run), rng);
        out.observations = std::move(observations);
        out.rasters = std::move(rasters);
    } else {
        if (run.data.observations.empty()) {
            throw ParameterError(
                "no training data: set data.observations or data.synthetic=true");
        }
        out.observations = load_observations(run.data.observations);
        if (!run.data.rasters.empty()) out.rasters = load_rasters(run.data.rasters);
    }
    return out;
}

std::string metrics_csv(const std::vector<EpochRecord>& records, const std::string& echo) {
    std::ostringstream out;
    out << "# config: " << echo << "\n";
    out << "epoch,mean_loss,seconds\n";
    for (const EpochRecord& record : records) {
        out << record.epoch << ',' << fmt_double(record.mean_loss) << ','
            << fmt_double(record.seconds) << '\n';
    }
    return out.str();
}

std::string csv_quote(const std::string& text) {
    std::string quoted = "\"";
    for (char c : text) {
        if (c == '"') quoted += "\"\"";
        else quoted += c;
    }
    return quoted + "\"";
}

// ---- subcommands -----------------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    Index jobs = 1;
};

RunConfig build_run(const CommonOpts& opts) {
    RunConfig run = load_run_config(opts.config_path, opts.sets);
    if (opts.seed_opt != nullptr && opts.seed_opt->count() > 0) {
        run.train.seed = opts.seed;
    }
    if (opts.jobs < 1) throw ParameterError("--jobs must be at least 1");
    validate_run(run);
    return run;
}

void cmd_train(const CommonOpts& opts) {
    const RunConfig run = build_run(opts);
    const std::string out_dir = resolve_out_dir(run, opts.out_dir);
    LoadedData data = load_data(run);

    ensure_dir(out_dir);
    TrainResult result = train(run.train, data.observations);
    write_text_file(out_dir + "/metrics.csv",
                    metrics_csv(result.epochs, result.meta.config_echo));
    const std::string checkpoint_path = out_dir + "/checkpoint.bin";
    save_checkpoint(result.model, result.meta, checkpoint_path);
    std::cout << "trained " << result.rows_trained << " rows for "
              << result.epochs.size() << " epochs; final mean loss "
              << fmt_double(result.epochs.back().mean_loss) << "; wrote "
              << checkpoint_path << "\n";
}

void warn_skipped(const std::vector<SkippedSpecies>& skipped) {
    for (const SkippedSpecies& s : skipped) {
        std::cerr << "warning: skipped species '" << s.species_id << "': " << s.reason
                  << "\n";
    }
}

void cmd_eval(const CommonOpts& opts, const std::string& checkpoint_flag,
              const std::string& rasters_flag, const std::string& data_flag,
              const std::string& metrics_flag) {
    RunConfig run = load_run_config(opts.config_path, opts.sets);
    if (!metrics_flag.empty()) {
        run.eval.metrics.clear();
        std::stringstream stream(metrics_flag);
        std::string token;
        while (std::getline(stream, token, ',')) {
            if (!token.empty()) run.eval.metrics.push_back(token);
        }
    }
    if (!data_flag.empty()) {
        run.data.observations = data_flag;
        run.data.synthetic = false;
    }
    validate_run(run);

    const std::string checkpoint_path =
        !checkpoint_flag.empty() ? checkpoint_flag : run.eval.checkpoint;
    if (checkpoint_path.empty()) {
        throw ParameterError("eval needs --checkpoint or eval.checkpoint");
    }
    const std::string rasters_dir = !rasters_flag.empty() ? rasters_flag : run.data.rasters;

    auto needs = [&](const char* metric) {
        for (const std::string& m : run.eval.metrics) {
            if (m == metric) return true;
        }
        return false;
    };
    if ((needs("map") || needs("prc")) && rasters_dir.empty()) {
        throw ParameterError("metrics map/prc need --rasters or data.rasters");
    }

    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const std::string echo = "# config: " + loaded.meta.config_echo + "\n";
    const std::string out_dir = resolve_out_dir(run, opts.out_dir);

    std::vector<RangeRaster> rasters;
    if (needs("map") || needs("prc")) rasters = load_rasters(rasters_dir);
    ensure_dir(out_dir);

    if (needs("map")) {
        const EvalReport report = evaluate_map(loaded.model, rasters, loaded.meta.vocab);
        warn_skipped(report.skipped);
        std::ostringstream per_species;
        per_species << echo << "species,ap\n";
        for (std::size_t k = 0; k < report.species_ids.size(); ++k) {
            per_species << report.species_ids[k] << ','
                        << fmt_double(report.per_species_ap[k]) << '\n';
        }
        write_text_file(out_dir + "/map.csv", per_species.str());
        std::ostringstream summary;
        summary << echo << "metric,value\n";
        summary << "map," << fmt_double(report.map) << '\n';
        summary << "species_evaluated," << report.species_ids.size() << '\n';
        summary << "species_skipped," << report.skipped.size() << '\n';
        write_text_file(out_dir + "/map_summary.csv", summary.str());
        std::cout << "map " << fmt_double(report.map) << " over "
                  << report.species_ids.size() << " species\n";
    }
    if (needs("prc")) {
        const PrecisionRecallCurve curve =
            precision_recall_curve(loaded.model, rasters, loaded.meta.vocab,
                                   run.eval.grid_points);
        warn_skipped(curve.skipped);
        std::ostringstream text;
        text << echo << "recall,mean_precision\n";
        for (std::size_t i = 0; i < curve.recall.size(); ++i) {
            text << fmt_double(curve.recall[i]) << ','
                 << fmt_double(curve.mean_precision[i]) << '\n';
        }
        write_text_file(out_dir + "/prc.csv", text.str());
        std::cout << "prc over " << curve.recall.size() << " recall points\n";
    }
    if (needs("r2")) {
        // Linear probe of the embedding against the built-in high-frequency
        // checkerboard field, on seeded uniform points.
        Rng probe_rng = Rng(loaded.meta.seed).stream("probe");
        Tensor coords(run.eval.probe_points, 2);
        for (Index i = 0; i < run.eval.probe_points; ++i) {
            coords(i, 0) = probe_rng.uniform(-1.0, 1.0);
            coords(i, 1) = probe_rng.uniform(-1.0, 1.0);
        }
        Graph graph(false);
        const Tensor embeddings = loaded.model.embed(graph, coords, false, nullptr);
        const Region field = Region::checkerboard(SyntheticSpec::kCheckerCell);
        std::vector<double> target(static_cast<std::size_t>(run.eval.probe_points));
        for (Index i = 0; i < run.eval.probe_points; ++i) {
            target[static_cast<std::size_t>(i)] =
                field.contains(coords(i, 0), coords(i, 1)) ? 1.0 : -1.0;
        }
        const ProbeFit fit = probe_r2(embeddings, target, probe_rng);
        std::ostringstream text;
        text << echo << "metric,value\n";
        text << "probe_r2," << fmt_double(fit.r2) << '\n';
        text << "degenerate_fit," << (fit.degenerate_fit ? 1 : 0) << '\n';
        text << "zero_variance_target," << (fit.zero_variance_target ? 1 : 0) << '\n';
        write_text_file(out_dir + "/r2.csv", text.str());
        std::cout << "probe_r2 " << fmt_double(fit.r2) << "\n";
    }
    if (needs("timing")) {
        LoadedData data = load_data(run);
        json echo_json;
        try {
            echo_json = json::parse(loaded.meta.config_echo);
        } catch (const json::exception& error) {
            throw IoError("checkpoint config echo is not valid JSON: " +
                          std::string(error.what()));
        }
        const TrainConfig config = parse_train_config(echo_json, "checkpoint.config");
        const std::vector<TrainConfig> configs = {config};
        const TimingTable table =
            benchmark_timing(configs, data.observations, run.eval.timing_repetitions);
        write_text_file(out_dir + "/timing.csv", echo + timing_csv(table));
        std::cout << "timing over " << run.eval.timing_repetitions << " repetitions\n";
    }
}

void cmd_sweep(const CommonOpts& opts) {
    const RunConfig run = build_run(opts);
    const std::string out_dir = resolve_out_dir(run, opts.out_dir);
    LoadedData data = load_data(run);
    if (data.rasters.empty()) {
        throw ParameterError("sweep needs rasters for evaluation: set data.rasters or "
                             "data.synthetic=true");
    }

    // One model per implicitness, logged before the runs so capacity plans
    // are visible even when training fails later.
    for (double implicitness : run.sweep.implicitness) {
        const Index features = run.train.features_per_level > 0
                                   ? run.train.features_per_level
                                   : default_features_per_level(implicitness);
        const CapacityPlan plan =
            plan_capacity(implicitness, run.train.total_dim, features);
        Rng scratch(0);
        const HybridModel probe(plan, data.observations.vocab.size(), run.train.grid,
                                run.train.dropout_p, scratch);
        std::cout << "plan implicitness=" << fmt_double(implicitness)
                  << " implicit_dim=" << plan.implicit_dim << " levels=" << plan.levels
                  << " features_per_level=" << plan.features_per_level
                  << " parameters=" << probe.parameter_count() << "\n";
    }

    std::vector<TrainConfig> configs;
    std::vector<std::optional<Index>> caps;
    if (run.sweep.obs_caps.empty()) {
        caps.push_back(std::nullopt);
    } else {
        for (Index cap : run.sweep.obs_caps) caps.push_back(cap);
    }
    for (double implicitness : run.sweep.implicitness) {
        for (double rate : run.sweep.learning_rates) {
            for (const auto& cap : caps) {
                for (std::uint64_t seed : run.sweep.seeds) {
                    TrainConfig config = run.train;
                    config.implicitness = implicitness;
                    config.learning_rate = rate;
                    config.obs_cap = cap;
                    config.seed = seed;
                    configs.push_back(config);
                }
            }
        }
    }

    SweepEvalSpec eval_spec;
    eval_spec.rasters = data.rasters;
    eval_spec.per_species_rows = run.sweep.per_species_rows;
    const SweepOutcome outcome = sweep(configs, data.observations, eval_spec, opts.jobs);

    ensure_dir(out_dir);
    const std::string echo = "# config: " + train_config_json(run.train) + "\n";
    write_text_file(out_dir + "/sweep.csv", echo + sweep_csv(outcome));

    std::ostringstream best;
    best << echo << "implicitness,obs_cap,learning_rate,median_map\n";
    for (const SweepBest& row : outcome.best) {
        best << fmt_double(row.implicitness) << ',';
        if (row.obs_cap >= 0) best << row.obs_cap;
        best << ',' << fmt_double(row.learning_rate) << ',' << fmt_double(row.median_map)
             << '\n';
    }
    write_text_file(out_dir + "/sweep_best.csv", best.str());

    if (!outcome.failures.empty()) {
        std::ostringstream failures;
        failures << "config_index,message\n";
        for (const SweepFailure& failure : outcome.failures) {
            std::cerr << "warning: run " << failure.config_index << " failed: "
                      << failure.message << "\n";
            failures << failure.config_index << ',' << csv_quote(failure.message) << '\n';
        }
        write_text_file(out_dir + "/sweep_failures.csv", failures.str());
    }
    std::cout << "sweep finished: " << configs.size() - outcome.failures.size() << "/"
              << configs.size() << " runs succeeded; results in " << out_dir << "\n";
    if (outcome.rows.empty()) {
        throw TrainingError("all " + std::to_string(configs.size()) +
                            " sweep runs failed; first error: " +
                            outcome.failures.front().message);
    }
}

void cmd_export(const CommonOpts& opts, const std::string& checkpoint_flag, Index rows,
                Index cols, const std::string& out_flag) {
    RunConfig run = load_run_config(opts.config_path, opts.sets);
    validate_run(run);
    const std::string checkpoint_path =
        !checkpoint_flag.empty() ? checkpoint_flag : run.eval.checkpoint;
    if (checkpoint_path.empty()) {
        throw ParameterError("export needs --checkpoint or eval.checkpoint");
    }
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    std::string out_path = out_flag;
    if (out_path.empty()) {
        const std::string out_dir = resolve_out_dir(run, opts.out_dir);
        ensure_dir(out_dir);
        out_path = out_dir + "/embeddings.grid";
    } else {
        const auto parent = std::filesystem::path(out_path).parent_path();
        if (!parent.empty()) ensure_dir(parent.string());
    }
    export_embedding_grid(loaded.model, rows, cols, out_path);
    std::cout << "wrote " << rows << "x" << cols << "x" << loaded.model.plan().total_dim
              << " embedding grid to " << out_path << "\n";
}

void cmd_synth(const CommonOpts& opts) {
    const RunConfig run = build_run(opts);
    const std::string out_dir = resolve_out_dir(run, opts.out_dir);

    Rng rng = Rng(run.train.seed).stream("synth");
    const auto [observations, rasters] = generate_synthetic(synthetic_spec_of(run), rng);

    ensure_dir(out_dir + "/rasters");
    std::ostringstream csv;
    csv << "lat,lon,taxon_id\n";
    for (Index i = 0; i < observations.size(); ++i) {
        // Stored normalized; the CSV convention is degrees.
        csv << fmt_double(observations.coords(i, 0) * 90.0) << ','
            << fmt_double(observations.coords(i, 1) * 180.0) << ','
            << observations.vocab.id_of(observations.species[i]) << '\n';
    }
    write_text_file(out_dir + "/observations.csv", csv.str());
    for (const RangeRaster& raster : rasters) {
        save_raster(raster, out_dir + "/rasters/" + raster.species_id + ".raster");
    }
    std::cout << "wrote " << observations.size() << " observations and " << rasters.size()
              << " rasters to " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid implicit/explicit location encoders for species distribution "
                 "modeling"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, sweep_opts, export_opts, synth_opts;
    auto add_common = [](CLI::App* cmd, CommonOpts& opts) {
        cmd->add_option("--config", opts.config_path, "JSON run config file");
        cmd->add_option("--set", opts.sets,
                        "Override a config key, e.g. --set train.epochs=3");
        cmd->add_option("--out-dir", opts.out_dir,
                        "Output directory (default: out_dir key, then $SDM_OUT_ROOT, "
                        "then ./out)");
        opts.seed_opt = cmd->add_option("--seed", opts.seed, "Override train.seed");
        cmd->add_option("--jobs", opts.jobs, "Worker threads for sweep runs");
    };

    CLI::App* train_cmd =
        app.add_subcommand("train", "Train a model; writes checkpoint.bin + metrics.csv");
    add_common(train_cmd, train_opts);

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Evaluate a checkpoint; writes one CSV per metric");
    add_common(eval_cmd, eval_opts);
    std::string eval_checkpoint, eval_rasters, eval_data, eval_metrics;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file to evaluate");
    eval_cmd->add_option("--rasters", eval_rasters, "Directory of .raster range maps");
    eval_cmd->add_option("--data", eval_data,
                         "Observations CSV (only the timing metric needs it)");
    eval_cmd->add_option("--metrics", eval_metrics,
                         "Comma-separated subset of map,prc,r2,timing");

    CLI::App* sweep_cmd = app.add_subcommand(
        "sweep", "Cross-product of implicitness x learning rate x obs cap x seed");
    add_common(sweep_cmd, sweep_opts);

    CLI::App* export_cmd =
        app.add_subcommand("export", "Export the embedding field on a lat/lon grid");
    add_common(export_cmd, export_opts);
    std::string export_checkpoint, export_out;
    Index export_rows = 64, export_cols = 64;
    export_cmd->add_option("--checkpoint", export_checkpoint, "Checkpoint file to export");
    export_cmd->add_option("--rows", export_rows, "Grid rows (default 64)");
    export_cmd->add_option("--cols", export_cols, "Grid cols (default 64)");
    export_cmd->add_option("--out", export_out,
                           "Output file (default <out-dir>/embeddings.grid)");

    CLI::App* synth_cmd = app.add_subcommand(
        "synth", "Write the built-in synthetic task as observations.csv + rasters/");
    add_common(synth_cmd, synth_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& error) {
        const int code = app.exit(error);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (train_cmd->parsed()) {
            cmd_train(train_opts);
        } else if (eval_cmd->parsed()) {
            cmd_eval(eval_opts, eval_checkpoint, eval_rasters, eval_data, eval_metrics);
        } else if (sweep_cmd->parsed()) {
            cmd_sweep(sweep_opts);
        } else if (export_cmd->parsed()) {
            cmd_export(export_opts, export_checkpoint, export_rows, export_cols,
                       export_out);
        } else if (synth_cmd->parsed()) {
            cmd_synth(synth_opts);
        }
        return kOk;
    } catch (const IoError& error) {
        return report_failure(kIo, "io", error.what());
    } catch (const TrainingError& error) {
        return report_failure(kRuntime, "runtime", error.what());
    } catch (const MetricError& error) {
        return report_failure(kRuntime, "runtime", error.what());
    } catch (const GenerationError& error) {
        return report_failure(kRuntime, "runtime", error.what());
    } catch (const ContractError& error) {
        return report_failure(kRuntime, "internal", error.what());
    } catch (const Error& error) {
        return report_failure(kValidation, "validation", error.what());
    } catch (const json::exception& error) {
        return report_failure(kValidation, "validation", error.what());
    } catch (const std::exception& error) {
        return report_failure(kRuntime, "runtime", error.what());
    }
}

#include "sdm/timing.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sdm/errors.hpp"

namespace sdm {
namespace {

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

Moments moments_of(const std::vector<double>& samples) {
    double sum = 0.0;
    for (double s : samples) sum += s;
    const double mean = sum / static_cast<double>(samples.size());
    double sq = 0.0;
    for (double s : samples) sq += (s - mean) * (s - mean);
    // Population variance: one repetition yields std == 0, not NaN.
    return {mean, std::sqrt(sq / static_cast<double>(samples.size()))};
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TimingTable benchmark_timing(std::span<const TrainConfig> configs,
                             const ObservationSet& data, Index repetitions) {
    if (configs.empty()) {
        throw ParameterError("timing benchmark needs at least one config");
    }
    if (repetitions < 1) {
        throw ParameterError("repetitions must be at least 1, got " +
                             std::to_string(repetitions));
    }

    TimingTable table;
    for (const TrainConfig& config : configs) {
        std::vector<double> train_samples;
        std::vector<double> infer_samples;
        for (Index rep = 0; rep < repetitions; ++rep) {
            TrainConfig varied = config;
            varied.seed = config.seed + static_cast<std::uint64_t>(rep);
            TrainResult result = train(varied, data);

            double epoch_sum = 0.0;
            for (const EpochRecord& record : result.epochs) epoch_sum += record.seconds;
            train_samples.push_back(epoch_sum /
                                    static_cast<double>(result.epochs.size()));

            const auto started = std::chrono::steady_clock::now();
            result.model.predict(data.coords);
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - started;
            infer_samples.push_back(elapsed.count());
        }
        const Moments train_m = moments_of(train_samples);
        const Moments infer_m = moments_of(infer_samples);
        table.rows.push_back({config.implicitness, train_m.mean, train_m.std,
                              infer_m.mean, infer_m.std, 0.0});
    }

    for (const TimingRow& row : table.rows) {
        if (row.implicitness == 1.0) {
            table.has_implicit_baseline = true;
            for (TimingRow& each : table.rows) {
                each.train_ratio_to_implicit = each.train_mean_s / row.train_mean_s;
            }
            break;  // first pure-implicit config is the baseline
        }
    }
    return table;
}

std::string timing_csv(const TimingTable& table) {
    std::ostringstream out;
    out << "implicitness,train_mean_s,train_std_s,infer_mean_s,infer_std_s,"
           "train_ratio_to_implicit\n";
    for (const TimingRow& row : table.rows) {
        out << fmt_double(row.implicitness) << ',' << fmt_double(row.train_mean_s) << ','
            << fmt_double(row.train_std_s) << ',' << fmt_double(row.infer_mean_s) << ','
            << fmt_double(row.infer_std_s) << ',';
        if (table.has_implicit_baseline) out << fmt_double(row.train_ratio_to_implicit);
        out << '\n';
    }
    return out.str();
}

}  // namespace sdm

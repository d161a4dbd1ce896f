#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdm/data.hpp"
#include "sdm/training.hpp"

namespace sdm {

// Wall-clock measurements for one config: per-epoch training seconds and one
// full-dataset inference pass, aggregated across repetitions. std is the
// population standard deviation, so a single repetition reports exactly 0.
struct TimingRow {
    double implicitness = 0.0;
    double train_mean_s = 0.0;
    double train_std_s = 0.0;
    double infer_mean_s = 0.0;
    double infer_std_s = 0.0;
    // train_mean_s divided by the pure-implicit config's train_mean_s;
    // meaningful only when has_implicit_baseline is set on the table.
    double train_ratio_to_implicit = 0.0;
};

struct TimingTable {
    std::vector<TimingRow> rows;  // one per config, input order
    bool has_implicit_baseline = false;
};

// Trains every config `repetitions` times (seed varied per repetition) and
// times each run's epochs plus an inference pass over the dataset coords.
// When some config has implicitness 1.0, every row's training time is also
// reported relative to the first such config.
TimingTable benchmark_timing(std::span<const TrainConfig> configs,
                             const ObservationSet& data, Index repetitions);

// CSV: header + one line per row; the ratio field is left empty when the
// config list had no pure-implicit baseline.
std::string timing_csv(const TimingTable& table);

}  // namespace sdm

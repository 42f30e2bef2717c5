#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fast/model.hpp"

namespace fast {

class ParseError : public std::runtime_error {
   public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

   private:
    std::size_t offset_;
};

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// N x T_total measurements, node-major.
struct SeriesDataset {
    std::size_t nodes = 0;
    std::size_t steps = 0;
    std::size_t granularity_minutes = 15;
    std::size_t tod0 = 0;  // time-of-day slot of step 0
    std::size_t dow0 = 0;  // day of week of step 0
    std::vector<double> values;

    std::size_t steps_per_day() const;
    double at(std::size_t node, std::size_t step) const { return values[node * steps + step]; }
    double& at(std::size_t node, std::size_t step) { return values[node * steps + step]; }
    // Throws ConfigError when the invariants do not hold.
    void validate() const;
    std::size_t time_of_day(std::size_t step) const;
    std::size_t day_of_week(std::size_t step) const;
};

// Binary dataset file: "FSTG1\n", a header line
// "N=<int> T=<int> granularity_min=<int> tod0=<int> dow0=<int>\n", then
// N*T little-endian doubles, node 0's full series first.
SeriesDataset load_series(const std::filesystem::path& path);
SeriesDataset parse_series(const std::string& bytes);
std::string serialize_series(const SeriesDataset& ds);
void save_series(const SeriesDataset& ds, const std::filesystem::path& path);

// CSV with a header row of node ids and one row per time step.
SeriesDataset import_csv(const std::filesystem::path& path, std::size_t granularity_minutes, std::size_t tod0 = 0,
                         std::size_t dow0 = 0);

// Half-open step interval [begin, end).
struct StepRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const StepRange&) const = default;
};

struct SplitRanges {
    StepRange train;
    StepRange val;
    StepRange test;
};

// Boundaries at floor(r_train * total) and floor((r_train + r_val) * total).
// Throws ConfigError when a range is shorter than min_length.
SplitRanges chronological_split(std::size_t total_steps, double train_ratio = 0.6, double val_ratio = 0.2,
                                std::size_t min_length = 1);

enum class NormalizationMode { kPerNode, kGlobal };
NormalizationMode parse_normalization(const std::string& text);
std::string to_string(NormalizationMode mode);

// z-score statistics fitted on the training range only.
class Normalizer {
   public:
    Normalizer() = default;
    Normalizer(std::vector<double> mean, std::vector<double> stddev);

    static Normalizer fit(const SeriesDataset& ds, StepRange train,
                          NormalizationMode mode = NormalizationMode::kPerNode);

    double apply(std::size_t node, double value) const { return (value - mean_[node]) / std_[node]; }
    double invert(std::size_t node, double value) const { return value * std_[node] + mean_[node]; }
    SeriesDataset apply(const SeriesDataset& ds) const;

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return std_; }
    std::size_t nodes() const { return mean_.size(); }

   private:
    std::vector<double> mean_;
    std::vector<double> std_;
};

// Which input-window step anchors the time-of-day / day-of-week lookups.
enum class TimeAnchor { kLastInput, kFirstInput, kTargetStart };
TimeAnchor parse_time_anchor(const std::string& text);
std::string to_string(TimeAnchor anchor);

struct WindowBatch {
    std::size_t batch = 0;
    std::size_t nodes = 0;
    std::size_t input_steps = 0;
    std::size_t horizon = 0;
    std::vector<double> x;  // B x N x T
    std::vector<double> y;  // B x N x P
    std::vector<std::size_t> tod;
    std::vector<std::size_t> dow;
    std::vector<std::size_t> anchors;  // last input step of each sample

    ModelInput model_input() const;
    Tensor target() const;
};

// Enumerates every window lying fully inside a range. A window anchored at t
// reads steps t-T+1..t and predicts t+1..t+P.
class WindowSampler {
   public:
    WindowSampler(const SeriesDataset& ds, StepRange range, std::size_t input_steps, std::size_t horizon,
                  TimeAnchor anchor = TimeAnchor::kLastInput);

    std::size_t size() const { return anchors_.size(); }
    const std::vector<std::size_t>& anchors() const { return anchors_; }

    // Anchor groups of at most batch_size; shuffled deterministically when a seed is given.
    std::vector<std::vector<std::size_t>> batches(std::size_t batch_size,
                                                  std::optional<std::uint64_t> shuffle_seed = std::nullopt) const;
    WindowBatch make_batch(const std::vector<std::size_t>& anchors) const;

   private:
    const SeriesDataset* ds_;
    std::size_t input_steps_;
    std::size_t horizon_;
    TimeAnchor anchor_;
    std::vector<std::size_t> anchors_;
};

struct SynthOptions {
    std::size_t nodes = 16;
    std::size_t days = 14;
    std::size_t granularity_minutes = 15;
    std::uint64_t seed = 0;
    double noise_std = 0.05;       // relative to each node's amplitude
    double weekly_strength = 0.2;  // 0 gives a purely daily-periodic series
};

// Group A occupies nodes [0, N/4), group B [N/4, N/2); members of a group
// share the daily and weekly phase.
struct SynthGroups {
    std::vector<std::size_t> group_a;
    std::vector<std::size_t> group_b;
};
SynthGroups synth_groups(std::size_t nodes);

SeriesDataset synth_generate(const SynthOptions& options);

}  // namespace fast

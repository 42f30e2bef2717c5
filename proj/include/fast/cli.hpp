#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fast/io.hpp"
#include "fast/model.hpp"
#include "fast/train.hpp"

namespace fast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Model + training settings plus paths, merged from a key=value file and
// command-line overrides.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string dataset;
    std::string out = "out";
    std::size_t threads = 1;
};

// Lines of "key = value"; '#' starts a comment. Throws ConfigError with the line number.
std::map<std::string, std::string> parse_key_values(const std::string& text);

// Every key is checked against the schema; unknown keys and malformed values throw ConfigError.
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);
std::map<std::string, std::string> describe(const RunConfig& config);
std::string render_key_values(const std::map<std::string, std::string>& settings);

struct BenchOptions {
    std::vector<std::size_t> nodes{256, 512, 1024, 2048, 4096};
    std::vector<std::size_t> horizons{48};
    std::vector<std::size_t> agents{32};
    std::size_t input_steps = 96;
    std::size_t hidden = 64;
    std::size_t experts = 8;
    std::size_t layers = 3;
    std::size_t warmup = 1;
    std::size_t repetitions = 5;
    bool train_step = true;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::size_t nodes = 0;
    std::size_t input_steps = 0;
    std::size_t horizon = 0;
    std::size_t agents = 0;
    double forward_ms = 0;     // median
    double train_step_ms = 0;  // median; 0 when disabled
    std::size_t peak_intermediate_elements = 0;
    std::size_t attention_peak_elements = 0;
    double attention_ms = 0;  // median attention-stage time within a forward
    double moe_ms = 0;
};

std::vector<BenchRow> run_bench(const BenchOptions& options);
CsvTable bench_csv(const std::vector<BenchRow>& rows);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Entry point shared by the fast_stg binary and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fast::cli

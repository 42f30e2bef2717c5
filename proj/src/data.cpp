#include "fast/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "fast/io.hpp"

namespace fast {

namespace {

constexpr char kMagic[] = "FSTG1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

double read_le_double(const char* p) {
    std::uint64_t bits;
    std::memcpy(&bits, p, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    return std::bit_cast<double>(bits);
}

void write_le_double(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    char buf[sizeof bits];
    std::memcpy(buf, &bits, sizeof bits);
    out.append(buf, sizeof bits);
}

std::size_t parse_size(const std::string& token, const std::string& key, std::size_t offset) {
    const std::string prefix = key + "=";
    if (token.rfind(prefix, 0) != 0 || token.size() == prefix.size()) {
        throw ParseError("malformed header: expected '" + key + "=<int>', got '" + token + "'", offset);
    }
    const std::string digits = token.substr(prefix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ParseError("malformed header: '" + key + "' is not a non-negative integer", offset);
    }
    return std::stoull(digits);
}

}  // namespace

std::size_t SeriesDataset::steps_per_day() const { return 1440 / granularity_minutes; }

void SeriesDataset::validate() const {
    if (granularity_minutes == 0 || 1440 % granularity_minutes != 0) {
        throw ConfigError("granularity of " + std::to_string(granularity_minutes) +
                          " minutes does not divide a day");
    }
    if (nodes == 0 || steps == 0) {
        throw ConfigError("dataset must have at least one node and one step");
    }
    if (values.size() != nodes * steps) {
        throw ConfigError("dataset holds " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(nodes * steps));
    }
    if (tod0 >= steps_per_day() || dow0 >= 7) {
        throw ConfigError("dataset start offset out of range");
    }
}

std::size_t SeriesDataset::time_of_day(std::size_t step) const { return (tod0 + step) % steps_per_day(); }

std::size_t SeriesDataset::day_of_week(std::size_t step) const {
    return (dow0 + (tod0 + step) / steps_per_day()) % 7;
}

// --- file format ----------------------------------------------------------------

SeriesDataset parse_series(const std::string& bytes) {
    if (bytes.compare(0, kMagicLen, kMagic) != 0) {
        throw ParseError("bad magic, expected FSTG1", 0);
    }
    const std::size_t line_end = bytes.find('\n', kMagicLen);
    if (line_end == std::string::npos) {
        throw ParseError("unterminated header line", bytes.size());
    }
    std::istringstream header(bytes.substr(kMagicLen, line_end - kMagicLen));
    std::vector<std::string> tokens;
    for (std::string tok; header >> tok;) {
        tokens.push_back(tok);
    }
    static const char* keys[] = {"N", "T", "granularity_min", "tod0", "dow0"};
    if (tokens.size() != std::size(keys)) {
        throw ParseError("malformed header: expected 5 fields, got " + std::to_string(tokens.size()), kMagicLen);
    }
    SeriesDataset ds;
    std::size_t fields[5];
    for (std::size_t i = 0; i < 5; ++i) {
        fields[i] = parse_size(tokens[i], keys[i], kMagicLen);
    }
    ds.nodes = fields[0];
    ds.steps = fields[1];
    ds.granularity_minutes = fields[2];
    ds.tod0 = fields[3];
    ds.dow0 = fields[4];
    if (ds.granularity_minutes == 0 || 1440 % ds.granularity_minutes != 0 || ds.tod0 >= ds.steps_per_day() ||
        ds.dow0 >= 7 || ds.nodes == 0 || ds.steps == 0) {
        throw ParseError("malformed header: inconsistent metadata", kMagicLen);
    }

    const std::size_t body = line_end + 1;
    const std::size_t count = ds.nodes * ds.steps;
    const std::size_t available = (bytes.size() - body) / sizeof(double);
    if (available < count) {
        throw ParseError("header declares " + std::to_string(count) + " values but file holds " +
                             std::to_string(available),
                         body + available * sizeof(double));
    }
    if (bytes.size() - body != count * sizeof(double)) {
        throw ParseError("trailing bytes after " + std::to_string(count) + " values", body + count * sizeof(double));
    }
    ds.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t off = body + i * sizeof(double);
        ds.values[i] = read_le_double(bytes.data() + off);
        if (!std::isfinite(ds.values[i])) {
            throw ParseError("non-finite value", off);
        }
    }
    return ds;
}

SeriesDataset load_series(const std::filesystem::path& path) { return parse_series(read_file(path)); }

std::string serialize_series(const SeriesDataset& ds) {
    ds.validate();
    std::string out(kMagic, kMagicLen);
    out += "N=" + std::to_string(ds.nodes) + " T=" + std::to_string(ds.steps) +
           " granularity_min=" + std::to_string(ds.granularity_minutes) + " tod0=" + std::to_string(ds.tod0) +
           " dow0=" + std::to_string(ds.dow0) + "\n";
    out.reserve(out.size() + ds.values.size() * sizeof(double));
    for (double v : ds.values) {
        write_le_double(out, v);
    }
    return out;
}

void save_series(const SeriesDataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_series(ds));
}

SeriesDataset import_csv(const std::filesystem::path& path, std::size_t granularity_minutes, std::size_t tod0,
                         std::size_t dow0) {
    const std::string text = read_file(path);
    std::vector<std::vector<double>> rows;
    std::size_t nodes = 0;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        std::string line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const std::size_t line_start = pos;
        pos = end + 1;
        if (line.empty()) {
            continue;
        }
        auto cells = split_csv_line(line);
        if (header) {
            nodes = cells.size();
            header = false;
            continue;
        }
        if (cells.size() != nodes) {
            throw ParseError("row has " + std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(nodes),
                             line_start);
        }
        std::vector<double> row;
        std::size_t col_off = line_start;
        for (const auto& cell : cells) {
            char* stop = nullptr;
            const double v = std::strtod(cell.c_str(), &stop);
            if (cell.empty() || *stop != '\0' || !std::isfinite(v)) {
                throw ParseError("invalid value '" + cell + "'", col_off);
            }
            row.push_back(v);
            col_off += cell.size() + 1;
        }
        rows.push_back(std::move(row));
    }
    if (nodes == 0 || rows.empty()) {
        throw ParseError("csv has no data rows", text.size());
    }
    SeriesDataset ds;
    ds.nodes = nodes;
    ds.steps = rows.size();
    ds.granularity_minutes = granularity_minutes;
    ds.tod0 = tod0;
    ds.dow0 = dow0;
    ds.values.resize(nodes * rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t n = 0; n < nodes; ++n) {
            ds.at(n, t) = rows[t][n];
        }
    }
    ds.validate();
    return ds;
}

// --- splitting and normalization ------------------------------------------------

SplitRanges chronological_split(std::size_t total_steps, double train_ratio, double val_ratio,
                                std::size_t min_length) {
    if (!(train_ratio > 0) || !(val_ratio > 0) || train_ratio + val_ratio >= 1.0 + 1e-12) {
        throw ConfigError("split ratios must be positive and leave room for a test split");
    }
    // The small guard keeps exact products such as 0.6 * 10 from flooring to 5.
    const auto boundary = [&](double ratio) {
        return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total_steps) + 1e-9));
    };
    SplitRanges s;
    const std::size_t b1 = boundary(train_ratio);
    const std::size_t b2 = std::max(b1, boundary(train_ratio + val_ratio));
    s.train = {0, b1};
    s.val = {b1, b2};
    s.test = {b2, total_steps};
    const std::pair<const char*, StepRange> named[] = {{"train", s.train}, {"validation", s.val}, {"test", s.test}};
    for (const auto& [name, r] : named) {
        if (r.size() < min_length) {
            throw ConfigError(std::string(name) + " split has " + std::to_string(r.size()) +
                              " steps, fewer than one window (" + std::to_string(min_length) + ")");
        }
    }
    return s;
}

NormalizationMode parse_normalization(const std::string& text) {
    if (text == "per_node") {
        return NormalizationMode::kPerNode;
    }
    if (text == "global") {
        return NormalizationMode::kGlobal;
    }
    throw ConfigError("unknown normalization '" + text + "'");
}

std::string to_string(NormalizationMode mode) { return mode == NormalizationMode::kPerNode ? "per_node" : "global"; }

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
    if (mean_.size() != std_.size()) {
        throw ContractError("normalizer mean/std length mismatch");
    }
    for (double s : std_) {
        if (!(s > 0)) {
            throw ContractError("normalizer std must be positive");
        }
    }
}

Normalizer Normalizer::fit(const SeriesDataset& ds, StepRange train, NormalizationMode mode) {
    if (train.size() == 0 || train.end > ds.steps) {
        throw ConfigError("normalizer: invalid training range");
    }
    auto stats = [&](std::size_t first_node, std::size_t last_node) {
        double total = 0;
        std::size_t count = 0;
        for (std::size_t n = first_node; n < last_node; ++n) {
            for (std::size_t t = train.begin; t < train.end; ++t) {
                total += ds.at(n, t);
                ++count;
            }
        }
        const double mu = total / static_cast<double>(count);
        double ss = 0;
        for (std::size_t n = first_node; n < last_node; ++n) {
            for (std::size_t t = train.begin; t < train.end; ++t) {
                const double dv = ds.at(n, t) - mu;
                ss += dv * dv;
            }
        }
        double sd = std::sqrt(ss / static_cast<double>(count));
        if (sd <= 1e-12 * std::max(1.0, std::abs(mu))) {
            sd = 1.0;
        }
        return std::pair{mu, sd};
    };
    std::vector<double> mean(ds.nodes), sd(ds.nodes);
    if (mode == NormalizationMode::kGlobal) {
        const auto [mu, s] = stats(0, ds.nodes);
        std::fill(mean.begin(), mean.end(), mu);
        std::fill(sd.begin(), sd.end(), s);
    } else {
        for (std::size_t n = 0; n < ds.nodes; ++n) {
            std::tie(mean[n], sd[n]) = stats(n, n + 1);
        }
    }
    return Normalizer(std::move(mean), std::move(sd));
}

SeriesDataset Normalizer::apply(const SeriesDataset& ds) const {
    if (ds.nodes != nodes()) {
        throw ConfigError("normalizer fitted on " + std::to_string(nodes()) + " nodes, dataset has " +
                          std::to_string(ds.nodes));
    }
    SeriesDataset out = ds;
    for (std::size_t n = 0; n < ds.nodes; ++n) {
        for (std::size_t t = 0; t < ds.steps; ++t) {
            out.at(n, t) = apply(n, ds.at(n, t));
        }
    }
    return out;
}

// --- windows ----------------------------------------------------------------------

TimeAnchor parse_time_anchor(const std::string& text) {
    if (text == "last_input") {
        return TimeAnchor::kLastInput;
    }
    if (text == "first_input") {
        return TimeAnchor::kFirstInput;
    }
    if (text == "target_start") {
        return TimeAnchor::kTargetStart;
    }
    throw ConfigError("unknown time anchor '" + text + "'");
}

std::string to_string(TimeAnchor anchor) {
    switch (anchor) {
        case TimeAnchor::kLastInput:
            return "last_input";
        case TimeAnchor::kFirstInput:
            return "first_input";
        case TimeAnchor::kTargetStart:
            return "target_start";
    }
    return "last_input";
}

ModelInput WindowBatch::model_input() const {
    return {Tensor::from({batch, nodes, input_steps}, x), tod, dow};
}

Tensor WindowBatch::target() const { return Tensor::from({batch, nodes, horizon}, y); }

WindowSampler::WindowSampler(const SeriesDataset& ds, StepRange range, std::size_t input_steps, std::size_t horizon,
                             TimeAnchor anchor)
    : ds_(&ds), input_steps_(input_steps), horizon_(horizon), anchor_(anchor) {
    if (input_steps == 0 || horizon == 0) {
        throw ConfigError("window lengths must be positive");
    }
    if (range.end > ds.steps || range.begin > range.end) {
        throw ConfigError("window range outside the dataset");
    }
    if (range.size() >= input_steps + horizon) {
        for (std::size_t t = range.begin + input_steps - 1; t + horizon < range.end; ++t) {
            anchors_.push_back(t);
        }
    }
}

std::vector<std::vector<std::size_t>> WindowSampler::batches(std::size_t batch_size,
                                                             std::optional<std::uint64_t> shuffle_seed) const {
    if (batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    std::vector<std::size_t> order = anchors_;
    if (shuffle_seed) {
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

WindowBatch WindowSampler::make_batch(const std::vector<std::size_t>& anchors) const {
    const SeriesDataset& ds = *ds_;
    WindowBatch b;
    b.batch = anchors.size();
    b.nodes = ds.nodes;
    b.input_steps = input_steps_;
    b.horizon = horizon_;
    b.anchors = anchors;
    b.x.resize(b.batch * ds.nodes * input_steps_);
    b.y.resize(b.batch * ds.nodes * horizon_);
    for (std::size_t s = 0; s < anchors.size(); ++s) {
        const std::size_t t = anchors[s];
        if (t + 1 < input_steps_ || t + horizon_ >= ds.steps) {
            throw ContractError("window anchored at step " + std::to_string(t) + " leaves the series");
        }
        for (std::size_t n = 0; n < ds.nodes; ++n) {
            const double* series = ds.values.data() + n * ds.steps;
            std::copy_n(series + (t + 1 - input_steps_), input_steps_,
                        b.x.begin() + static_cast<std::ptrdiff_t>((s * ds.nodes + n) * input_steps_));
            std::copy_n(series + t + 1, horizon_,
                        b.y.begin() + static_cast<std::ptrdiff_t>((s * ds.nodes + n) * horizon_));
        }
        std::size_t time_step = t;
        if (anchor_ == TimeAnchor::kFirstInput) {
            time_step = t + 1 - input_steps_;
        } else if (anchor_ == TimeAnchor::kTargetStart) {
            time_step = t + 1;
        }
        b.tod.push_back(ds.time_of_day(time_step));
        b.dow.push_back(ds.day_of_week(time_step));
    }
    return b;
}

// --- synthetic data ------------------------------------------------------------------

SynthGroups synth_groups(std::size_t nodes) {
    SynthGroups g;
    const std::size_t quarter = nodes / 4;
    for (std::size_t n = 0; n < quarter; ++n) {
        g.group_a.push_back(n);
        g.group_b.push_back(quarter + n);
    }
    return g;
}

SeriesDataset synth_generate(const SynthOptions& o) {
    SeriesDataset ds;
    ds.nodes = o.nodes;
    ds.granularity_minutes = o.granularity_minutes;
    if (o.granularity_minutes == 0 || 1440 % o.granularity_minutes != 0) {
        throw ConfigError("granularity must divide a day");
    }
    const std::size_t spd = ds.steps_per_day();
    ds.steps = o.days * spd;
    ds.values.resize(ds.nodes * ds.steps);

    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> level_dist(50.0, 150.0);
    std::uniform_real_distribution<double> amp_dist(20.0, 60.0);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);

    const SynthGroups groups = synth_groups(o.nodes);
    const double phase_a = phase_dist(rng), weekly_a = phase_dist(rng);
    const double phase_b = phase_dist(rng), weekly_b = phase_dist(rng);
    const std::size_t quarter = o.nodes / 4;
    const double week = static_cast<double>(7 * spd);

    for (std::size_t n = 0; n < o.nodes; ++n) {
        const double level = level_dist(rng);
        const double amp = amp_dist(rng);
        double phase = phase_dist(rng);
        double weekly = phase_dist(rng);
        if (n < quarter) {
            phase = phase_a;
            weekly = weekly_a;
        } else if (n < 2 * quarter) {
            phase = phase_b;
            weekly = weekly_b;
        }
        for (std::size_t t = 0; t < ds.steps; ++t) {
            // Phases depend only on the position within the day / week, so the
            // noiseless series repeats exactly.
            const double slot = static_cast<double>((ds.tod0 + t) % spd);
            const double week_pos = static_cast<double>((ds.tod0 + t) % (7 * spd));
            const double daily = std::sin(2.0 * std::numbers::pi * slot / static_cast<double>(spd) + phase);
            const double modulation =
                1.0 + o.weekly_strength * std::sin(2.0 * std::numbers::pi * week_pos / week + weekly);
            double value = level + amp * daily * modulation;
            if (o.noise_std > 0) {
                value += o.noise_std * amp * noise(rng);
            }
            ds.at(n, t) = value;
        }
    }
    return ds;
}

}  // namespace fast

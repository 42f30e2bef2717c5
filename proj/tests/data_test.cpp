#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "fast/analysis.hpp"
#include "fast/data.hpp"
#include "fast/io.hpp"

using namespace fast;
namespace fs = std::filesystem;

namespace {

SeriesDataset ramp(std::size_t nodes, std::size_t steps, std::size_t granularity = 15) {
    SeriesDataset ds;
    ds.nodes = nodes;
    ds.steps = steps;
    ds.granularity_minutes = granularity;
    ds.values.resize(nodes * steps);
    for (std::size_t n = 0; n < nodes; ++n) {
        for (std::size_t t = 0; t < steps; ++t) {
            ds.at(n, t) = 1000.0 * n + t;
        }
    }
    return ds;
}

std::string header_for(std::size_t n, std::size_t t) {
    return "FSTG1\nN=" + std::to_string(n) + " T=" + std::to_string(t) + " granularity_min=15 tod0=0 dow0=0\n";
}

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / ("fast_data_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(SeriesFile, RoundTripIsBitIdentical) {
    std::mt19937_64 rng(1);
    SeriesDataset ds = ramp(3, 7);
    ds.tod0 = 5;
    ds.dow0 = 6;
    std::normal_distribution<double> noise;
    for (auto& v : ds.values) {
        v += noise(rng);
    }
    const std::string bytes = serialize_series(ds);
    const SeriesDataset back = parse_series(bytes);
    EXPECT_EQ(serialize_series(back), bytes);
    EXPECT_EQ(back.values, ds.values);
    EXPECT_EQ(back.tod0, 5u);
    EXPECT_EQ(back.dow0, 6u);

    const fs::path path = temp_dir() / "rt.fstg";
    save_series(ds, path);
    EXPECT_EQ(read_file(path), bytes);
}

TEST(SeriesFile, HeaderLayout) {
    const std::string bytes = serialize_series(ramp(2, 5));
    EXPECT_EQ(bytes.substr(0, header_for(2, 5).size()), header_for(2, 5));
    EXPECT_EQ(bytes.size(), header_for(2, 5).size() + 10 * 8);
    const SeriesDataset ds = parse_series(bytes);
    EXPECT_EQ(ds.nodes, 2u);
    EXPECT_EQ(ds.steps, 5u);
    // node-major, little-endian
    double v = 0;
    std::memcpy(&v, bytes.data() + header_for(2, 5).size() + 5 * 8, 8);
    EXPECT_EQ(v, 1000.0);
}

TEST(SeriesFile, ShortBodyReportsShortfallOffset) {
    std::string bytes = serialize_series(ramp(2, 5));
    bytes.resize(bytes.size() - 8);
    try {
        parse_series(bytes);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), header_for(2, 5).size() + 9 * 8);
    }
}

TEST(SeriesFile, MalformedInputs) {
    EXPECT_THROW(parse_series("FSTG2\nN=1 T=1 granularity_min=15 tod0=0 dow0=0\n"), ParseError);
    EXPECT_THROW(parse_series("FSTG1\nN=1 T=1 granularity_min=15\n"), ParseError);
    EXPECT_THROW(parse_series("FSTG1\nN=x T=1 granularity_min=15 tod0=0 dow0=0\n"), ParseError);
    EXPECT_THROW(parse_series("FSTG1\nN=1 T=1 granularity_min=7 tod0=0 dow0=0\n" + std::string(8, '\0')), ParseError);
    std::string extra = serialize_series(ramp(1, 2)) + "x";
    EXPECT_THROW(parse_series(extra), ParseError);

    std::string bad = serialize_series(ramp(1, 3));
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t off = bad.size() - 8;
    std::memcpy(bad.data() + off, &inf, 8);
    try {
        parse_series(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), off);
    }
}

TEST(SeriesFile, CsvImport) {
    const fs::path path = temp_dir() / "in.csv";
    std::ofstream(path) << "a,b\n1,10\n2,20\n3,30\n";
    const SeriesDataset ds = import_csv(path, 60, 2, 3);
    EXPECT_EQ(ds.nodes, 2u);
    EXPECT_EQ(ds.steps, 3u);
    EXPECT_EQ(ds.steps_per_day(), 24u);
    EXPECT_EQ(ds.at(1, 2), 30.0);
    EXPECT_EQ(ds.at(0, 1), 2.0);
    std::ofstream(path) << "a,b\n1,10\n2\n";
    EXPECT_THROW(import_csv(path, 60), ParseError);
}

TEST(Split, TenSteps) {
    const auto s = chronological_split(10);
    EXPECT_EQ(s.train, (StepRange{0, 6}));
    EXPECT_EQ(s.val, (StepRange{6, 8}));
    EXPECT_EQ(s.test, (StepRange{8, 10}));
}

TEST(Split, SevenStepsFloor) {
    const auto s = chronological_split(7);
    EXPECT_EQ(s.train.size(), 4u);
    EXPECT_EQ(s.val.size(), 1u);
    EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, PartitionLaw) {
    for (std::size_t total = 5; total < 400; total += 7) {
        const auto s = chronological_split(total);
        EXPECT_EQ(s.train.begin, 0u);
        EXPECT_EQ(s.train.end, s.val.begin);
        EXPECT_EQ(s.val.end, s.test.begin);
        EXPECT_EQ(s.test.end, total);
        EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), total);
    }
}

TEST(Split, TooSmallIsConfigError) {
    EXPECT_THROW(chronological_split(20, 0.6, 0.2, 5), ConfigError);
    EXPECT_NO_THROW(chronological_split(100, 0.6, 0.2, 5));
}

TEST(Windows, CountMatchesEnumeration) {
    const SeriesDataset ds = ramp(2, 40);
    for (std::size_t len : {5u, 10u, 17u}) {
        for (std::size_t t : {1u, 3u}) {
            for (std::size_t p : {1u, 2u}) {
                const StepRange range{4, 4 + len};
                std::size_t expected = 0;
                for (std::size_t first = range.begin; first + t + p <= range.end; ++first) {
                    ++expected;
                }
                EXPECT_EQ(WindowSampler(ds, range, t, p).size(), expected);
            }
        }
    }
    EXPECT_EQ(WindowSampler(ds, {0, 10}, 3, 2).size(), 6u);
    EXPECT_EQ(WindowSampler(ds, {0, 4}, 3, 2).size(), 0u);
}

TEST(Windows, AlignmentAndContiguity) {
    const SeriesDataset ds = ramp(3, 50);
    const WindowSampler sampler(ds, {10, 40}, 6, 4);
    const WindowBatch b = sampler.make_batch(sampler.anchors());
    for (std::size_t s = 0; s < b.batch; ++s) {
        const std::size_t t = b.anchors[s];
        EXPECT_GE(t + 1, 10u + 6);
        EXPECT_LE(t + 4, 39u);
        for (std::size_t n = 0; n < 3; ++n) {
            const double* x = &b.x[(s * 3 + n) * 6];
            const double* y = &b.y[(s * 3 + n) * 4];
            EXPECT_EQ(x[5], ds.at(n, t));
            EXPECT_EQ(x[0], ds.at(n, t - 5));
            EXPECT_EQ(y[0], ds.at(n, t + 1));
            EXPECT_EQ(y[3], ds.at(n, t + 4));
        }
    }
}

TEST(Windows, TimeIndices) {
    SeriesDataset ds = ramp(1, 2000);
    EXPECT_EQ(ds.steps_per_day(), 96u);
    EXPECT_EQ(ds.time_of_day(100), 4u);
    EXPECT_EQ(ds.day_of_week(100), 1u);
    ds.tod0 = 90;
    ds.dow0 = 6;
    EXPECT_EQ(ds.time_of_day(10), 4u);
    EXPECT_EQ(ds.day_of_week(10), 0u);
    const WindowSampler sampler(ds, {0, 2000}, 12, 3);
    const WindowBatch b = sampler.make_batch(sampler.anchors());
    for (std::size_t s = 0; s < b.batch; ++s) {
        EXPECT_LT(b.tod[s], 96u);
        EXPECT_LT(b.dow[s], 7u);
        EXPECT_EQ(b.tod[s], ds.time_of_day(b.anchors[s]));
    }
}

TEST(Windows, AnchorModes) {
    const SeriesDataset ds = ramp(1, 200);
    const std::vector<std::size_t> anchor{50};
    EXPECT_EQ(WindowSampler(ds, {0, 200}, 10, 5, TimeAnchor::kLastInput).make_batch(anchor).tod[0], 50u);
    EXPECT_EQ(WindowSampler(ds, {0, 200}, 10, 5, TimeAnchor::kFirstInput).make_batch(anchor).tod[0], 41u);
    EXPECT_EQ(WindowSampler(ds, {0, 200}, 10, 5, TimeAnchor::kTargetStart).make_batch(anchor).tod[0], 51u);
}

TEST(Windows, ShuffleIsSeededPermutation) {
    const SeriesDataset ds = ramp(1, 300);
    const WindowSampler sampler(ds, {0, 300}, 8, 4);
    const auto a = sampler.batches(16, 42);
    const auto b = sampler.batches(16, 42);
    const auto c = sampler.batches(16, 43);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::multiset<std::size_t> seen;
    for (const auto& batch : a) {
        EXPECT_LE(batch.size(), 16u);
        seen.insert(batch.begin(), batch.end());
    }
    EXPECT_EQ(seen, std::multiset<std::size_t>(sampler.anchors().begin(), sampler.anchors().end()));
    const auto ordered = sampler.batches(16);
    EXPECT_EQ(ordered.front().front(), sampler.anchors().front());
}

TEST(Normalizer, ConstantNode) {
    SeriesDataset ds = ramp(2, 10);
    for (std::size_t t = 0; t < 10; ++t) {
        ds.at(0, t) = 7.5;
    }
    const Normalizer norm = Normalizer::fit(ds, {0, 6});
    EXPECT_EQ(norm.mean()[0], 7.5);
    EXPECT_EQ(norm.stddev()[0], 1.0);
    EXPECT_EQ(norm.apply(0, 7.5), 0.0);
}

TEST(Normalizer, PopulationStd) {
    SeriesDataset ds = ramp(1, 4);
    ds.values = {0, 2, 100, -100};
    const Normalizer norm = Normalizer::fit(ds, {0, 2});
    EXPECT_EQ(norm.mean()[0], 1.0);
    EXPECT_EQ(norm.stddev()[0], 1.0);
    const SeriesDataset z = norm.apply(ds);
    EXPECT_EQ(z.at(0, 0), -1.0);
    EXPECT_EQ(z.at(0, 1), 1.0);
}

TEST(Normalizer, InvertApplyIdentity) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> dist(50, 30);
    SeriesDataset ds = ramp(4, 100);
    for (auto& v : ds.values) {
        v = dist(rng);
    }
    for (auto mode : {NormalizationMode::kPerNode, NormalizationMode::kGlobal}) {
        const Normalizer norm = Normalizer::fit(ds, {0, 60}, mode);
        for (std::size_t n = 0; n < 4; ++n) {
            for (std::size_t t = 0; t < 100; ++t) {
                EXPECT_NEAR(norm.invert(n, norm.apply(n, ds.at(n, t))), ds.at(n, t), 1e-10);
            }
        }
    }
}

TEST(Normalizer, UsesTrainingRangeOnly) {
    SeriesDataset ds = ramp(1, 10);
    const Normalizer a = Normalizer::fit(ds, {0, 6});
    for (std::size_t t = 6; t < 10; ++t) {
        ds.at(0, t) = 1e6;
    }
    const Normalizer b = Normalizer::fit(ds, {0, 6});
    EXPECT_EQ(a.mean(), b.mean());
    EXPECT_EQ(a.stddev(), b.stddev());
}

TEST(Synth, SeedDeterminism) {
    SynthOptions o;
    o.seed = 9;
    EXPECT_EQ(synth_generate(o).values, synth_generate(o).values);
    SynthOptions p = o;
    p.seed = 10;
    EXPECT_NE(synth_generate(o).values, synth_generate(p).values);
    EXPECT_EQ(synth_generate(o).steps, 14u * 96);
}

TEST(Synth, NoiselessDailySeriesIsPeriodic) {
    SynthOptions o;
    o.noise_std = 0;
    o.weekly_strength = 0;
    o.days = 3;
    const SeriesDataset ds = synth_generate(o);
    for (std::size_t n = 0; n < ds.nodes; ++n) {
        for (std::size_t t = 0; t + 96 < ds.steps; ++t) {
            EXPECT_EQ(ds.at(n, t), ds.at(n, t + 96));
        }
    }
}

TEST(Synth, WeeklyModulationRepeatsWeekly) {
    SynthOptions o;
    o.noise_std = 0;
    o.days = 14;
    const SeriesDataset ds = synth_generate(o);
    const std::size_t week = 7 * 96;
    bool daily_differs = false;
    for (std::size_t t = 0; t + week < ds.steps; ++t) {
        EXPECT_EQ(ds.at(3, t), ds.at(3, t + week));
        daily_differs |= ds.at(3, t) != ds.at(3, t + 96);
    }
    EXPECT_TRUE(daily_differs);
}

TEST(Synth, GroupMembersCorrelate) {
    SynthOptions o;
    o.noise_std = 0;
    o.nodes = 16;
    const SeriesDataset ds = synth_generate(o);
    const SynthGroups g = synth_groups(16);
    ASSERT_EQ(g.group_a.size(), 4u);
    ASSERT_EQ(g.group_b.size(), 4u);
    auto series = [&](std::size_t n) {
        return std::span<const double>(ds.values.data() + n * ds.steps, ds.steps);
    };
    for (const auto& group : {g.group_a, g.group_b}) {
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                EXPECT_GT(*pearson(series(group[i]), series(group[j])), 0.99);
            }
        }
    }
}

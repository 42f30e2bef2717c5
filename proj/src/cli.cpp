#include "fast/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "fast/checkpoint.hpp"
#include "fast/data.hpp"

namespace fast::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::size_t to_count(const std::string& key, const std::string& value) {
    if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + value + "'");
    }
    return std::stoull(value);
}

double to_real(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0' || !std::isfinite(v)) {
        throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
    }
    return v;
}

template <typename F>
auto wrap_config(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> s = {
        {"dataset", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
        {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = to_count(k, v); }},
        {"threads", [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = to_count(k, v); }},
        {"input_steps",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.model.input_steps = to_count(k, v); }},
        {"horizon", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.horizon = to_count(k, v); }},
        {"hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.hidden = to_count(k, v); }},
        {"experts", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.experts = to_count(k, v); }},
        {"agents", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.agents = to_count(k, v); }},
        {"layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.layers = to_count(k, v); }},
        {"router",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.model.router = wrap_config(k, [&] { return parse_router_mode(v); });
         }},
        {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr = to_real(k, v); }},
        {"decay_factor",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.decay_factor = to_real(k, v); }},
        {"decay_every",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.decay_every = to_count(k, v); }},
        {"max_epochs",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.max_epochs = to_count(k, v); }},
        {"batch_size",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_count(k, v); }},
        {"huber_delta",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.huber_delta = to_real(k, v); }},
        {"patience", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.patience = to_count(k, v); }},
        {"clip_norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.clip_norm = to_real(k, v); }},
        {"loss_scale",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "normalized" && v != "raw") {
                 throw ConfigError("key '" + k + "' expects normalized|raw, got '" + v + "'");
             }
             c.train.loss_on_raw_scale = v == "raw";
         }},
        {"normalization",
         [](RunConfig& c, const std::string&, const std::string& v) { c.train.normalization = parse_normalization(v); }},
        {"time_anchor",
         [](RunConfig& c, const std::string&, const std::string& v) { c.train.time_anchor = parse_time_anchor(v); }},
        {"train_ratio",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.train_ratio = to_real(k, v); }},
        {"val_ratio", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.val_ratio = to_real(k, v); }},
    };
    return s;
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& cell : split_csv_line(text)) {
        out.push_back(to_count("list", cell));
    }
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunConfig load_run_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    std::map<std::string, std::string> settings;
    if (!config_path.empty()) {
        std::string text;
        try {
            text = read_file(config_path);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        settings = parse_key_values(text);
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + o + "' is not key=value");
        }
        settings[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
    }
    apply_settings(cfg, settings);
    return cfg;
}

SeriesDataset load_dataset_or_config_error(const std::string& path) {
    if (path.empty()) {
        throw ConfigError("missing required key 'dataset'");
    }
    if (!fs::exists(path)) {
        throw ConfigError("dataset '" + path + "' does not exist (key 'dataset')");
    }
    return load_series(path);
}

Checkpoint load_checkpoint_or_config_error(const std::string& path) {
    if (path.empty() || !fs::exists(path)) {
        throw ConfigError("checkpoint '" + path + "' does not exist");
    }
    return load_checkpoint(path);
}

// --- commands ------------------------------------------------------------------------

int cmd_synth(const SynthOptions& o, const std::string& out_dir, std::ostream& out) {
    const SeriesDataset ds = synth_generate(o);
    const fs::path path = fs::path(out_dir) / "dataset.fstg";
    save_series(ds, path);
    out << "wrote " << path.string() << " (" << ds.nodes << " nodes x " << ds.steps << " steps)\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const SeriesDataset raw = load_dataset_or_config_error(cfg.dataset);
    ModelConfig mc = cfg.model;
    mc.nodes = raw.nodes;
    mc.steps_per_day = raw.steps_per_day();
    const fs::path dir = cfg.out;
    fs::create_directories(dir);
    RunConfig effective = cfg;
    effective.model = mc;
    write_file_atomic(dir / "effective_config.txt", render_key_values(describe(effective)));

    const TrainResult result = train(mc, cfg.train, raw);
    save_checkpoint(result.best, dir / "checkpoint.fstck");
    history_csv(result.history).save(dir / "history.csv");
    const MetricsReport test = evaluate(result.best, raw, split_range(result.best, raw, Split::kTest));
    metrics_csv(test).save(dir / "test_metrics.csv");
    out << "trained " << result.history.size() << " epochs, best epoch " << result.best_epoch << ", test MAE "
        << format_double(test.overall.mae) << "\n";
    return kExitOk;
}

int cmd_predict(const std::string& ckpt_path, const std::string& dataset, std::size_t anchor,
                const std::string& out_dir, std::ostream& out) {
    const Checkpoint ck = load_checkpoint_or_config_error(ckpt_path);
    const SeriesDataset raw = load_dataset_or_config_error(dataset);
    if (anchor + 1 < ck.config.input_steps || anchor >= raw.steps) {
        throw ConfigError("anchor " + std::to_string(anchor) + " does not allow a full " +
                          std::to_string(ck.config.input_steps) + "-step input window");
    }
    const auto forecast = predict(ck, raw, anchor);
    std::vector<std::string> header{"node"};
    for (std::size_t p = 0; p < ck.config.horizon; ++p) {
        header.push_back("step_" + std::to_string(p + 1));
    }
    CsvTable t(header);
    for (std::size_t n = 0; n < forecast.size(); ++n) {
        std::vector<std::string> row{std::to_string(n)};
        for (double v : forecast[n]) {
            row.push_back(format_double(v));
        }
        t.add_row(row);
    }
    const fs::path path = fs::path(out_dir) / "forecast.csv";
    t.save(path);
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const std::string& split_name,
             const std::string& out_dir, std::ostream& out) {
    const Checkpoint ck = load_checkpoint_or_config_error(ckpt_path);
    const SeriesDataset raw = load_dataset_or_config_error(dataset);
    const Split split = parse_split(split_name);
    const StepRange range = split_range(ck, raw, split);
    const MetricsReport report = evaluate(ck, raw, range);
    const fs::path dir = out_dir;
    metrics_csv(report).save(dir / "metrics.csv");
    expert_profile_csv(expert_weight_profile(ck, raw, range)).save(dir / "expert_profile.csv");
    const Metrics& m = report.overall;
    out << "{\"split\": \"" << split_name << "\", \"mae\": " << format_double(m.mae)
        << ", \"rmse\": " << format_double(m.rmse) << ", \"mape\": " << (m.mape ? format_double(*m.mape) : "null")
        << ", \"r2\": " << format_double(m.r2) << ", \"windows_values\": " << m.count << "}\n";
    return kExitOk;
}

int cmd_fidelity(const std::vector<std::string>& ckpt_paths, const std::string& dataset,
                 const std::string& split_name, std::size_t samples, const std::string& out_dir, std::ostream& out) {
    const SeriesDataset raw = load_dataset_or_config_error(dataset);
    std::vector<Checkpoint> checkpoints;
    std::vector<std::string> labels;
    for (const auto& p : ckpt_paths) {
        if (!fs::exists(p)) {
            log(LogLevel::kError, "skipping missing checkpoint '" + p + "'");
            continue;
        }
        checkpoints.push_back(load_checkpoint(p));
        labels.push_back("a=" + std::to_string(checkpoints.back().config.agents));
    }
    if (checkpoints.empty()) {
        throw ConfigError("no usable checkpoints given");
    }
    const auto reports = fidelity_sweep(checkpoints, labels, raw, parse_split(split_name), samples);
    const fs::path dir = out_dir;
    fidelity_table(reports).save(dir / "fidelity.csv");
    fidelity_details(reports).save(dir / "fidelity_layers.csv");
    out << fidelity_table(reports).str();
    return kExitOk;
}

int cmd_bench(const BenchOptions& options, const std::string& out_dir, std::ostream& out) {
    const auto rows = run_bench(options);
    const fs::path path = fs::path(out_dir) / "bench.csv";
    bench_csv(rows).save(path);
    out << bench_csv(rows).str();
    if (options.nodes.size() >= 2 && options.horizons.size() == 1 && options.agents.size() == 1) {
        std::vector<double> n, t, peak;
        for (const auto& r : rows) {
            n.push_back(static_cast<double>(r.nodes));
            t.push_back(r.forward_ms);
            peak.push_back(static_cast<double>(r.peak_intermediate_elements));
        }
        out << "forward_time_exponent=" << format_double(loglog_slope(n, t)) << "\n";
        out << "peak_elements_exponent=" << format_double(loglog_slope(n, peak)) << "\n";
    }
    return kExitOk;
}

}  // namespace

// --- configuration -------------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(number) + ": empty key");
        }
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings) {
    const auto& s = schema();
    for (const auto& [key, value] : settings) {
        auto it = s.find(key);
        if (it == s.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second(config, key, value);
    }
}

std::map<std::string, std::string> describe(const RunConfig& c) {
    return {
        {"dataset", c.dataset},
        {"out", c.out},
        {"seed", std::to_string(c.train.seed)},
        {"threads", std::to_string(c.threads)},
        {"nodes", std::to_string(c.model.nodes)},
        {"steps_per_day", std::to_string(c.model.steps_per_day)},
        {"input_steps", std::to_string(c.model.input_steps)},
        {"horizon", std::to_string(c.model.horizon)},
        {"hidden", std::to_string(c.model.hidden)},
        {"experts", std::to_string(c.model.experts)},
        {"agents", std::to_string(c.model.agents)},
        {"layers", std::to_string(c.model.layers)},
        {"router", to_string(c.model.router)},
        {"lr", format_double(c.train.lr)},
        {"decay_factor", format_double(c.train.decay_factor)},
        {"decay_every", std::to_string(c.train.decay_every)},
        {"max_epochs", std::to_string(c.train.max_epochs)},
        {"batch_size", std::to_string(c.train.batch_size)},
        {"huber_delta", format_double(c.train.huber_delta)},
        {"patience", std::to_string(c.train.patience)},
        {"clip_norm", format_double(c.train.clip_norm)},
        {"loss_scale", c.train.loss_on_raw_scale ? "raw" : "normalized"},
        {"normalization", to_string(c.train.normalization)},
        {"time_anchor", to_string(c.train.time_anchor)},
        {"train_ratio", format_double(c.train.train_ratio)},
        {"val_ratio", format_double(c.train.val_ratio)},
    };
}

std::string render_key_values(const std::map<std::string, std::string>& settings) {
    std::string out;
    for (const auto& [k, v] : settings) {
        out += k + "=" + v + "\n";
    }
    return out;
}

// --- bench ---------------------------------------------------------------------------

std::vector<BenchRow> run_bench(const BenchOptions& o) {
    using Clock = std::chrono::steady_clock;
    auto ms_since = [](Clock::time_point t) {
        return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
    };
    std::vector<BenchRow> rows;
    for (std::size_t n : o.nodes) {
        for (std::size_t p : o.horizons) {
            for (std::size_t a : o.agents) {
                ModelConfig mc;
                mc.nodes = n;
                mc.input_steps = o.input_steps;
                mc.horizon = p;
                mc.hidden = o.hidden;
                mc.experts = o.experts;
                mc.agents = a;
                mc.layers = o.layers;
                ModelParams params = ModelParams::initialize(mc, o.seed);
                std::mt19937_64 rng(o.seed + 1);
                std::normal_distribution<double> unit(0.0, 1.0);
                std::vector<double> x(n * mc.input_steps), y(n * p);
                for (auto& v : x) {
                    v = unit(rng);
                }
                for (auto& v : y) {
                    v = unit(rng);
                }
                const ModelInput input{Tensor::from({1, n, mc.input_steps}, x), {0}, {0}};
                const Tensor target = Tensor::from({1, n, p}, y);

                BenchRow row;
                row.nodes = n;
                row.input_steps = mc.input_steps;
                row.horizon = p;
                row.agents = a;
                std::vector<double> fwd, att, moe, step;
                for (std::size_t r = 0; r < o.warmup + o.repetitions; ++r) {
                    NoGradGuard no_grad;
                    ForwardStats stats;
                    const auto start = Clock::now();
                    forward(input, params, &stats);
                    const double elapsed = ms_since(start);
                    row.peak_intermediate_elements = stats.forward_peak_elements;
                    row.attention_peak_elements = stats.attention_peak_elements;
                    if (r >= o.warmup) {
                        fwd.push_back(elapsed);
                        att.push_back(stats.attention_seconds * 1e3);
                        moe.push_back(stats.moe_seconds * 1e3);
                    }
                }
                if (o.train_step) {
                    AdamOptimizer adam(params.named());
                    for (std::size_t r = 0; r < o.warmup + o.repetitions; ++r) {
                        const auto start = Clock::now();
                        params.zero_grad();
                        Tensor loss = huber_loss(target, forward(input, params).prediction, 1.0);
                        loss.backward();
                        adam.step(1e-4);
                        const double elapsed = ms_since(start);
                        if (r >= o.warmup) {
                            step.push_back(elapsed);
                        }
                    }
                    row.train_step_ms = median(step);
                }
                row.forward_ms = median(fwd);
                row.attention_ms = median(att);
                row.moe_ms = median(moe);
                log(LogLevel::kDebug, "bench N=" + std::to_string(n) + " forward_ms=" + format_double(row.forward_ms));
                rows.push_back(row);
            }
        }
    }
    return rows;
}

CsvTable bench_csv(const std::vector<BenchRow>& rows) {
    CsvTable t({"N", "T", "P", "a", "forward_ms", "train_step_ms", "peak_intermediate_elements",
                "attention_peak_elements", "attention_ms", "moe_ms"});
    for (const auto& r : rows) {
        t.add_row({std::to_string(r.nodes), std::to_string(r.input_steps), std::to_string(r.horizon),
                   std::to_string(r.agents), format_double(r.forward_ms), format_double(r.train_step_ms),
                   std::to_string(r.peak_intermediate_elements), std::to_string(r.attention_peak_elements),
                   format_double(r.attention_ms), format_double(r.moe_ms)});
    }
    return t;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ContractError("loglog_slope: need at least two paired points");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// --- entry point ---------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Long-horizon spatial-temporal graph forecasting", "fast_stg"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value configuration file");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--threads", threads, "worker threads");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    SynthOptions synth_opts;
    synth->add_option("--nodes", synth_opts.nodes);
    synth->add_option("--days", synth_opts.days);
    synth->add_option("--granularity", synth_opts.granularity_minutes, "minutes per step");
    synth->add_option("--noise", synth_opts.noise_std, "noise std relative to amplitude");
    synth->add_option("--weekly", synth_opts.weekly_strength, "weekly modulation strength");

    auto* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd);
    std::string dataset;
    train_cmd->add_option("--dataset", dataset, "dataset file");
    train_cmd->add_option("--set", overrides, "override a config key (key=value)");

    auto* predict_cmd = app.add_subcommand("predict", "forecast one window");
    add_common(predict_cmd);
    std::string checkpoint;
    std::size_t anchor = 0;
    predict_cmd->add_option("--checkpoint", checkpoint)->required();
    predict_cmd->add_option("--dataset", dataset)->required();
    predict_cmd->add_option("--anchor", anchor, "last input step of the window")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(eval_cmd);
    std::string split = "test";
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--dataset", dataset)->required();
    eval_cmd->add_option("--split", split);

    auto* fidelity_cmd = app.add_subcommand("fidelity", "spatial reconstruction errors across checkpoints");
    add_common(fidelity_cmd);
    std::vector<std::string> checkpoints;
    std::size_t samples = 64;
    fidelity_cmd->add_option("--checkpoint", checkpoints, "checkpoint (repeatable)")->required();
    fidelity_cmd->add_option("--dataset", dataset)->required();
    fidelity_cmd->add_option("--split", split);
    fidelity_cmd->add_option("--samples", samples, "evaluation windows per checkpoint");

    auto* bench_cmd = app.add_subcommand("bench", "forward/train-step scaling benchmark");
    add_common(bench_cmd);
    BenchOptions bench;
    std::string nodes_list = "256,512,1024,2048,4096", horizon_list = "48", agent_list = "32";
    bench_cmd->add_option("--nodes", nodes_list, "comma-separated node counts");
    bench_cmd->add_option("--horizons", horizon_list, "comma-separated horizons");
    bench_cmd->add_option("--agents", agent_list, "comma-separated agent counts");
    bench_cmd->add_option("--input-steps", bench.input_steps);
    bench_cmd->add_option("--hidden", bench.hidden);
    bench_cmd->add_option("--experts", bench.experts);
    bench_cmd->add_option("--layers", bench.layers);
    bench_cmd->add_option("--warmup", bench.warmup);
    bench_cmd->add_option("--reps", bench.repetitions);
    bool no_train_step = false;
    bench_cmd->add_flag("--no-train-step", no_train_step, "time forward passes only");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        Eigen::setNbThreads(static_cast<int>(std::max<std::size_t>(1, threads)));
        if (*synth) {
            if (seed) {
                synth_opts.seed = *seed;
            }
            return cmd_synth(synth_opts, out_dir.empty() ? "." : out_dir, out);
        }
        if (*train_cmd) {
            if (!dataset.empty()) {
                overrides.push_back("dataset=" + dataset);
            }
            if (!out_dir.empty()) {
                overrides.push_back("out=" + out_dir);
            }
            if (seed) {
                overrides.push_back("seed=" + std::to_string(*seed));
            }
            overrides.push_back("threads=" + std::to_string(threads));
            return cmd_train(load_run_config(config_path, overrides), out);
        }
        const std::string dir = out_dir.empty() ? "." : out_dir;
        if (*predict_cmd) {
            return cmd_predict(checkpoint, dataset, anchor, dir, out);
        }
        if (*eval_cmd) {
            return cmd_eval(checkpoint, dataset, split, dir, out);
        }
        if (*fidelity_cmd) {
            return cmd_fidelity(checkpoints, dataset, split, samples, dir, out);
        }
        if (*bench_cmd) {
            bench.nodes = parse_list(nodes_list);
            bench.horizons = parse_list(horizon_list);
            bench.agents = parse_list(agent_list);
            bench.train_step = !no_train_step;
            if (seed) {
                bench.seed = *seed;
            }
            return cmd_bench(bench, dir, out);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace fast::cli

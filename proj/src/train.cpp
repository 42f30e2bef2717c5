#include "fast/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "fast/io.hpp"

namespace fast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// [N,1] column tensors that map normalized values back to the raw scale.
std::pair<Tensor, Tensor> denormalizer_columns(const Normalizer& norm) {
    const std::size_t n = norm.nodes();
    return {Tensor::from({n, 1}, norm.stddev()), Tensor::from({n, 1}, norm.mean())};
}

Tensor to_raw(const Tensor& normalized, const Normalizer& norm) {
    auto [sd, mu] = denormalizer_columns(norm);
    return normalized * sd + mu;
}

struct PreparedData {
    SplitRanges splits;
    Normalizer normalizer;
    SeriesDataset normalized;
};

void accumulate_report(std::vector<MetricsAccumulator>& per_step, MetricsAccumulator& overall,
                       const WindowBatch& raw_batch, std::span<const double> prediction) {
    const std::size_t p = raw_batch.horizon;
    for (std::size_t i = 0; i < raw_batch.y.size(); ++i) {
        overall.add(raw_batch.y[i], prediction[i]);
        per_step[i % p].add(raw_batch.y[i], prediction[i]);
    }
}

MetricsReport finish_report(const std::vector<MetricsAccumulator>& per_step, const MetricsAccumulator& overall) {
    MetricsReport r;
    r.overall = overall.result();
    for (const auto& acc : per_step) {
        r.per_step.push_back(acc.result());
    }
    return r;
}

MetricsReport evaluate_normalized(const ModelParams& params, const Normalizer& norm, const SeriesDataset& normalized,
                                  const SeriesDataset& raw, StepRange range, TimeAnchor anchor,
                                  std::size_t batch_size) {
    const ModelConfig& c = params.config();
    NoGradGuard no_grad;
    WindowSampler sampler(normalized, range, c.input_steps, c.horizon, anchor);
    WindowSampler raw_sampler(raw, range, c.input_steps, c.horizon, anchor);
    std::vector<MetricsAccumulator> per_step(c.horizon);
    MetricsAccumulator overall;
    for (const auto& anchors : sampler.batches(batch_size)) {
        const WindowBatch batch = sampler.make_batch(anchors);
        const Tensor pred = to_raw(forward(batch.model_input(), params).prediction, norm);
        accumulate_report(per_step, overall, raw_sampler.make_batch(anchors), pred.data());
    }
    return finish_report(per_step, overall);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0) || !(decay_factor > 0) || decay_every == 0 || max_epochs == 0 || batch_size == 0 ||
        !(huber_delta > 0) || clip_norm < 0) {
        throw ConfigError("train config: rates, counts and huber delta must be positive");
    }
}

double lr_schedule(const TrainConfig& config, std::size_t epoch) {
    return config.lr * std::pow(config.decay_factor, static_cast<double>(epoch / config.decay_every));
}

Tensor huber_loss(const Tensor& target, const Tensor& prediction, double delta) {
    if (target.shape() != prediction.shape()) {
        throw ShapeError("huber_loss: target " + to_string(target.shape()) + " vs prediction " +
                         to_string(prediction.shape()));
    }
    const double batch = target.rank() == 3 ? static_cast<double>(target.dim(0)) : 1.0;
    return scale(sum(huber(prediction - target, delta)), 1.0 / batch);
}

// --- optimizer -------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<NamedTensor> params, AdamSettings settings)
    : params_(std::move(params)), settings_(settings) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamOptimizer::step(double lr) {
    for (const auto& p : params_) {
        if (p.tensor.has_grad() && !all_finite(p.tensor.grad())) {
            throw NumericError("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    ++t_;
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor t = params_[i].tensor;
        auto w = t.mutable_data();
        const auto g = t.grad();
        const bool has = !g.empty();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = has ? g[k] : 0.0;
            m[k] = b1 * m[k] + (1 - b1) * gk;
            v[k] = b2 * v[k] + (1 - b2) * gk * gk;
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + settings_.epsilon);
        }
    }
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm) {
    double ss = 0;
    for (const auto& p : params) {
        for (double g : p.tensor.grad()) {
            ss += g * g;
        }
    }
    const double norm = std::sqrt(ss);
    if (max_norm > 0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (const auto& p : params) {
            auto& g = p.tensor.node()->grad;
            for (auto& v : g) {
                v *= factor;
            }
        }
    }
    return norm;
}

bool EarlyStopping::update(double metric) {
    ++evaluations_;
    improved_ = !has_best_ || metric < best_;
    if (improved_) {
        best_ = metric;
        has_best_ = true;
        best_index_ = evaluations_;
        bad_ = 0;
        return false;
    }
    ++bad_;
    return bad_ > patience_;
}

CsvTable history_csv(const std::vector<EpochRecord>& history) {
    CsvTable t({"epoch", "train_loss", "val_mae", "lr", "seconds"});
    for (const auto& r : history) {
        t.add_row({std::to_string(r.epoch), format_double(r.train_loss), format_double(r.val_mae), format_double(r.lr),
                   format_double(r.seconds)});
    }
    return t;
}

// --- training loop -------------------------------------------------------------------------

TrainResult train(const ModelConfig& model_config, const TrainConfig& tc, const SeriesDataset& raw,
                  const TrainHooks& hooks) {
    using Clock = std::chrono::steady_clock;
    raw.validate();
    tc.validate();
    ModelConfig mc = model_config;
    if (mc.nodes == 0) {
        mc.nodes = raw.nodes;
    }
    if (mc.nodes != raw.nodes) {
        throw ConfigError("model expects " + std::to_string(mc.nodes) + " nodes, dataset has " +
                          std::to_string(raw.nodes));
    }
    if (mc.steps_per_day != raw.steps_per_day()) {
        throw ConfigError("model steps_per_day " + std::to_string(mc.steps_per_day) + " does not match dataset (" +
                          std::to_string(raw.steps_per_day()) + ")");
    }
    for (const auto& w : mc.validate()) {
        log(LogLevel::kInfo, "warning: " + w);
    }

    const SplitRanges splits =
        chronological_split(raw.steps, tc.train_ratio, tc.val_ratio, mc.input_steps + mc.horizon);
    const Normalizer norm = Normalizer::fit(raw, splits.train, tc.normalization);
    const SeriesDataset normalized = norm.apply(raw);
    WindowSampler train_windows(normalized, splits.train, mc.input_steps, mc.horizon, tc.time_anchor);
    WindowSampler raw_train_windows(raw, splits.train, mc.input_steps, mc.horizon, tc.time_anchor);

    Checkpoint current;
    current.config = mc;
    current.params = ModelParams::initialize(mc, tc.seed);
    current.normalizer = norm;
    current.time_anchor = tc.time_anchor;
    current.train_ratio = tc.train_ratio;
    current.val_ratio = tc.val_ratio;
    const auto named = current.params.named();
    AdamOptimizer adam(named);
    EarlyStopping stopper(tc.patience);

    TrainResult result;
    result.best = current;
    result.best.params = current.params.clone();
    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
        const auto start = Clock::now();
        const double lr = lr_schedule(tc, epoch);
        double loss_sum = 0;
        std::size_t loss_batches = 0;
        for (const auto& anchors : train_windows.batches(tc.batch_size, splitmix64(tc.seed ^ (epoch + 1)))) {
            const WindowBatch batch = train_windows.make_batch(anchors);
            current.params.zero_grad();
            Tensor pred = forward(batch.model_input(), current.params).prediction;
            Tensor target = batch.target();
            if (tc.loss_on_raw_scale) {
                pred = to_raw(pred, norm);
                target = raw_train_windows.make_batch(anchors).target();
            }
            Tensor loss = huber_loss(target, pred, tc.huber_delta);
            loss.backward();
            if (tc.clip_norm > 0) {
                clip_grad_norm(named, tc.clip_norm);
            }
            adam.step(lr);
            loss_sum += loss.item();
            ++loss_batches;
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_batches));
        rec.val_mae =
            evaluate_normalized(current.params, norm, normalized, raw, splits.val, tc.time_anchor, tc.batch_size)
                .overall.mae;
        if (hooks.override_val_mae) {
            rec.val_mae = hooks.override_val_mae(rec.epoch, rec.val_mae);
        }
        rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        result.history.push_back(rec);
        log(LogLevel::kDebug, "epoch " + std::to_string(rec.epoch) + " loss " + format_double(rec.train_loss) +
                                  " val_mae " + format_double(rec.val_mae));
        if (hooks.on_epoch) {
            hooks.on_epoch(rec);
        }
        const bool stop = stopper.update(rec.val_mae);
        if (stopper.improved()) {
            result.best.params = current.params.clone();
            result.best_epoch = rec.epoch;
        }
        if (stop) {
            break;
        }
    }
    return result;
}

// --- evaluation ----------------------------------------------------------------------------

Split parse_split(const std::string& text) {
    if (text == "train") {
        return Split::kTrain;
    }
    if (text == "val" || text == "validation") {
        return Split::kVal;
    }
    if (text == "test") {
        return Split::kTest;
    }
    throw ConfigError("unknown split '" + text + "'");
}

StepRange split_range(const Checkpoint& ckpt, const SeriesDataset& raw, Split split) {
    const auto s = chronological_split(raw.steps, ckpt.train_ratio, ckpt.val_ratio,
                                       ckpt.config.input_steps + ckpt.config.horizon);
    switch (split) {
        case Split::kTrain:
            return s.train;
        case Split::kVal:
            return s.val;
        case Split::kTest:
            return s.test;
    }
    return s.test;
}

namespace {

void check_compatible(const Checkpoint& ckpt, const SeriesDataset& raw) {
    if (ckpt.config.nodes != raw.nodes) {
        throw ConfigError("checkpoint expects " + std::to_string(ckpt.config.nodes) + " nodes, dataset has " +
                          std::to_string(raw.nodes));
    }
    if (ckpt.config.steps_per_day != raw.steps_per_day()) {
        throw ConfigError("checkpoint steps_per_day does not match dataset granularity");
    }
}

}  // namespace

MetricsReport evaluate(const Checkpoint& ckpt, const SeriesDataset& raw, StepRange range, std::size_t batch_size) {
    check_compatible(ckpt, raw);
    const SeriesDataset normalized = ckpt.normalizer.apply(raw);
    return evaluate_normalized(ckpt.params, ckpt.normalizer, normalized, raw, range, ckpt.time_anchor, batch_size);
}

std::vector<std::vector<double>> predict(const Checkpoint& ckpt, const SeriesDataset& raw, std::size_t anchor) {
    check_compatible(ckpt, raw);
    const ModelConfig& c = ckpt.config;
    if (anchor + 1 < c.input_steps || anchor >= raw.steps) {
        throw ConfigError("anchor step " + std::to_string(anchor) + " does not leave room for a " +
                          std::to_string(c.input_steps) + "-step input window");
    }
    const SeriesDataset normalized = ckpt.normalizer.apply(raw);
    // The sampler needs room for targets; a forecast at the series end has none,
    // so build the input directly.
    ModelInput input;
    std::vector<double> x(c.nodes * c.input_steps);
    for (std::size_t n = 0; n < c.nodes; ++n) {
        for (std::size_t k = 0; k < c.input_steps; ++k) {
            x[n * c.input_steps + k] = normalized.at(n, anchor + 1 - c.input_steps + k);
        }
    }
    input.x = Tensor::from({1, c.nodes, c.input_steps}, std::move(x));
    std::size_t time_step = anchor;
    if (ckpt.time_anchor == TimeAnchor::kFirstInput) {
        time_step = anchor + 1 - c.input_steps;
    } else if (ckpt.time_anchor == TimeAnchor::kTargetStart) {
        time_step = anchor + 1;
    }
    input.tod = {raw.time_of_day(time_step)};
    input.dow = {raw.day_of_week(time_step)};
    NoGradGuard no_grad;
    const Tensor pred = to_raw(forward(input, ckpt.params).prediction, ckpt.normalizer);
    std::vector<std::vector<double>> out(c.nodes, std::vector<double>(c.horizon));
    for (std::size_t n = 0; n < c.nodes; ++n) {
        for (std::size_t p = 0; p < c.horizon; ++p) {
            out[n][p] = pred.data()[n * c.horizon + p];
        }
    }
    return out;
}

MetricsReport persistence_baseline(const SeriesDataset& raw, StepRange range, std::size_t input_steps,
                                   std::size_t horizon) {
    WindowSampler sampler(raw, range, input_steps, horizon);
    std::vector<MetricsAccumulator> per_step(horizon);
    MetricsAccumulator overall;
    for (const auto& anchors : sampler.batches(64)) {
        const WindowBatch b = sampler.make_batch(anchors);
        std::vector<double> pred(b.y.size());
        for (std::size_t row = 0; row < b.batch * b.nodes; ++row) {
            const double last = b.x[row * input_steps + input_steps - 1];
            std::fill_n(pred.begin() + static_cast<std::ptrdiff_t>(row * horizon), horizon, last);
        }
        accumulate_report(per_step, overall, b, pred);
    }
    return finish_report(per_step, overall);
}

WindowBatch representative_batch(const SeriesDataset& normalized, StepRange range, const Checkpoint& ckpt,
                                 std::size_t count) {
    WindowSampler sampler(normalized, range, ckpt.config.input_steps, ckpt.config.horizon, ckpt.time_anchor);
    if (sampler.size() == 0) {
        throw ConfigError("range too short for a single window");
    }
    const std::size_t take = std::min(count, sampler.size());
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < take; ++i) {
        anchors.push_back(sampler.anchors()[i * sampler.size() / take]);
    }
    return sampler.make_batch(anchors);
}

std::vector<FidelityReport> fidelity_sweep(const std::vector<Checkpoint>& checkpoints,
                                           const std::vector<std::string>& labels, const SeriesDataset& raw,
                                           Split split, std::size_t samples) {
    std::vector<FidelityReport> out;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const Checkpoint& ck = checkpoints[i];
        check_compatible(ck, raw);
        const StepRange range = split_range(ck, raw, split);
        const SeriesDataset normalized = ck.normalizer.apply(raw);
        const WindowBatch batch = representative_batch(normalized, range, ck, samples);
        FidelityReport rep;
        rep.label = i < labels.size() ? labels[i] : "a=" + std::to_string(ck.config.agents);
        rep.agents = ck.config.agents;
        {
            NoGradGuard no_grad;
            const ForwardResult fr = forward(batch.model_input(), ck.params);
            rep.layers = analyze_trace(fr.trace, ck.config.agents);
        }
        for (const auto& l : rep.layers) {
            rep.epsilon_avg += l.epsilon;
        }
        rep.epsilon_avg /= static_cast<double>(std::max<std::size_t>(1, rep.layers.size()));
        const MetricsReport m = evaluate(ck, raw, range);
        rep.mae = m.overall.mae;
        rep.rmse = m.overall.rmse;
        out.push_back(std::move(rep));
    }
    return out;
}

ExpertProfile expert_weight_profile(const Checkpoint& ckpt, const SeriesDataset& raw, StepRange range,
                                    std::size_t batch_size) {
    check_compatible(ckpt, raw);
    const SeriesDataset normalized = ckpt.normalizer.apply(raw);
    WindowSampler sampler(normalized, range, ckpt.config.input_steps, ckpt.config.horizon, ckpt.time_anchor);
    ExpertProfileBuilder builder;
    NoGradGuard no_grad;
    for (const auto& anchors : sampler.batches(batch_size)) {
        builder.add(forward(sampler.make_batch(anchors).model_input(), ckpt.params).trace);
    }
    return builder.result();
}

}  // namespace fast

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fast/analysis.hpp"
#include "fast/checkpoint.hpp"
#include "fast/data.hpp"
#include "fast/model.hpp"

namespace fast {

struct TrainConfig {
    double lr = 0.002;
    double decay_factor = 0.5;
    std::size_t decay_every = 10;  // epochs
    std::size_t max_epochs = 50;
    std::size_t batch_size = 64;
    double huber_delta = 1.0;
    std::size_t patience = 10;  // on validation MAE
    std::uint64_t seed = 0;
    double clip_norm = 0;  // global gradient-norm clip; 0 disables
    bool loss_on_raw_scale = false;
    NormalizationMode normalization = NormalizationMode::kPerNode;
    TimeAnchor time_anchor = TimeAnchor::kLastInput;
    double train_ratio = 0.6;
    double val_ratio = 0.2;

    void validate() const;
};

// lr0 * decay^floor(epoch / decay_every).
double lr_schedule(const TrainConfig& config, std::size_t epoch);

// Pointwise Huber summed over nodes and horizon steps, averaged over the batch.
Tensor huber_loss(const Tensor& target, const Tensor& prediction, double delta);

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamOptimizer {
   public:
    explicit AdamOptimizer(std::vector<NamedTensor> params, AdamSettings settings = {});

    // Applies one bias-corrected update using the accumulated grads. Tensors
    // without a grad are treated as having a zero gradient. Throws
    // NumericError naming the first parameter with a non-finite gradient.
    void step(double lr);

    std::size_t steps() const { return t_; }
    std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
    std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

   private:
    std::vector<NamedTensor> params_;
    AdamSettings settings_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

// Scales every grad so their joint L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

// Stops once more than `patience` consecutive evaluations fail to improve on the best.
class EarlyStopping {
   public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Returns true when training should stop after this evaluation.
    bool update(double metric);
    bool improved() const { return improved_; }
    double best() const { return best_; }
    std::size_t best_index() const { return best_index_; }
    std::size_t evaluations() const { return evaluations_; }

   private:
    std::size_t patience_;
    double best_ = 0;
    bool has_best_ = false;
    bool improved_ = false;
    std::size_t best_index_ = 0;
    std::size_t evaluations_ = 0;
    std::size_t bad_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_mae = 0;
    double lr = 0;
    double seconds = 0;
};

CsvTable history_csv(const std::vector<EpochRecord>& history);

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

struct TrainHooks {
    // Replaces the validation MAE (used to test the stopping rule).
    std::function<double(std::size_t epoch, double val_mae)> override_val_mae;
    std::function<void(const EpochRecord&)> on_epoch;
};

// Training loss is computed on the normalized scale unless loss_on_raw_scale;
// validation MAE is always on the raw scale.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, const SeriesDataset& raw,
                  const TrainHooks& hooks = {});

enum class Split { kTrain, kVal, kTest };
Split parse_split(const std::string& text);
StepRange split_range(const Checkpoint& ckpt, const SeriesDataset& raw, Split split);

// Metrics on de-normalized predictions over every window of `range`.
MetricsReport evaluate(const Checkpoint& ckpt, const SeriesDataset& raw, StepRange range,
                       std::size_t batch_size = 64);

// Forecast for the window whose last input step is `anchor`: N rows x P columns, raw scale.
std::vector<std::vector<double>> predict(const Checkpoint& ckpt, const SeriesDataset& raw, std::size_t anchor);

// Repeats the last observed value over the horizon.
MetricsReport persistence_baseline(const SeriesDataset& raw, StepRange range, std::size_t input_steps,
                                   std::size_t horizon);

// Evenly spaced windows of a range, at most `count` of them, as one batch.
WindowBatch representative_batch(const SeriesDataset& normalized, StepRange range, const Checkpoint& ckpt,
                                 std::size_t count);

// One report per checkpoint: layer-wise reconstruction errors on a fixed
// evaluation batch, plus MAE/RMSE over the whole split.
std::vector<FidelityReport> fidelity_sweep(const std::vector<Checkpoint>& checkpoints,
                                           const std::vector<std::string>& labels, const SeriesDataset& raw,
                                           Split split, std::size_t samples = 64);

// Mean router weights per node over every window of a range.
ExpertProfile expert_weight_profile(const Checkpoint& ckpt, const SeriesDataset& raw, StepRange range,
                                    std::size_t batch_size = 64);

}  // namespace fast

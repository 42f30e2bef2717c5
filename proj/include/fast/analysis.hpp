#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fast/io.hpp"
#include "fast/model.hpp"

namespace fast {

// --- forecast metrics -----------------------------------------------------------

// MAPE skips targets with |y| below this.
inline constexpr double kMapeMaskThreshold = 1e-6;

struct Metrics {
    double mae = 0;
    double rmse = 0;
    std::optional<double> mape;  // percent; empty when every target is masked
    double r2 = 0;
    std::size_t count = 0;
};

struct MetricsReport {
    Metrics overall;
    std::vector<Metrics> per_step;  // one entry per horizon step
};

// Streams (target, prediction) pairs; R^2 uses a running mean/variance.
class MetricsAccumulator {
   public:
    void add(double y, double y_hat);
    Metrics result() const;

   private:
    std::size_t n_ = 0;
    double abs_err_ = 0;
    double sq_err_ = 0;
    double mape_sum_ = 0;
    std::size_t mape_n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
};

Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat);

// Rows "overall" and "step_<k>" with columns scope,mae,rmse,mape,r2,count.
CsvTable metrics_csv(const MetricsReport& report);

// Sample correlation; empty when either input has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// --- spatial fidelity of agent attention -----------------------------------------

using Matrix = Eigen::MatrixXd;

// Slice b of a [B,R,C] tensor.
Matrix batch_slice(const Tensor& t, std::size_t b);

// P = A_dist * A_agg (N x N). Analysis only; the model never forms it.
Matrix projection_matrix(const Matrix& dist, const Matrix& agg);

// ||H - P H||_F / ||H||_F. Throws ContractError when ||H||_F == 0.
double reconstruction_error(const Matrix& h, const Matrix& p);

// sqrt(sum_{i>a} sigma_i^2) / ||H||_F over the singular values of H.
double eckart_young_lower_bound(const Matrix& h, std::size_t agents);

// sqrt(sum_{i>a} lambda_i^2) / ||H||_F with lambda the eigenvalues of H H^T.
// The additive O(1/sqrt(a)) sampling term has no stated constant and is left out.
double nystrom_upper_first_term(const Matrix& h, std::size_t agents);

struct LayerFidelity {
    std::size_t layer = 0;  // 1-based block index
    double epsilon = 0;
    double lower_bound = 0;
    double upper_first_term = 0;
    // Smallest epsilon - lower_bound over the analysed samples.
    double min_bound_slack = 0;
};

struct FidelityReport {
    std::string label;
    std::size_t agents = 0;
    std::vector<LayerFidelity> layers;
    double epsilon_avg = 0;
    double mae = 0;
    double rmse = 0;
};

// Per-layer errors of one traced forward pass, averaged over the batch.
// Each block's projection is applied to its input H^{l-1}; W_V is ignored.
std::vector<LayerFidelity> analyze_trace(const ForwardTrace& trace, std::size_t agents);

// Rows eps_1..eps_L, eps_avg, MAE, RMSE; one column per report.
CsvTable fidelity_table(const std::vector<FidelityReport>& reports);
// Long format: label,agents,layer,epsilon,lower_bound,upper_first_term,min_bound_slack.
CsvTable fidelity_details(const std::vector<FidelityReport>& reports);

// --- expert usage ------------------------------------------------------------------

struct ExpertProfile {
    // [layer][node][expert] mean routing weight over all analysed windows.
    std::vector<std::vector<std::vector<double>>> node_means;
    // [layer][expert] mean over nodes and windows.
    std::vector<std::vector<double>> marginal;
    std::vector<double> marginal_entropy;

    double mean_entropy() const;
};

// Shannon entropy (nats) of a probability vector.
double entropy(std::span<const double> p);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Accumulates router outputs G^l over forward passes.
class ExpertProfileBuilder {
   public:
    void add(const ForwardTrace& trace);
    ExpertProfile result() const;

   private:
    std::vector<std::vector<double>> sums_;  // [layer][node * e + expert]
    std::size_t nodes_ = 0;
    std::size_t experts_ = 0;
    std::size_t samples_ = 0;
};

// Columns layer,node,expert_0..expert_{e-1},marginal_entropy; one row per node plus a
// node=marginal row per layer. The layer's entropy is repeated on every row.
CsvTable expert_profile_csv(const ExpertProfile& profile);

}  // namespace fast

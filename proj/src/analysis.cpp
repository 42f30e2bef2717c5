#include "fast/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fast {

void MetricsAccumulator::add(double y, double y_hat) {
    const double err = y - y_hat;
    ++n_;
    abs_err_ += std::abs(err);
    sq_err_ += err * err;
    if (std::abs(y) >= kMapeMaskThreshold) {
        mape_sum_ += std::abs(err) / std::abs(y);
        ++mape_n_;
    }
    const double delta = y - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (y - mean_);
}

Metrics MetricsAccumulator::result() const {
    Metrics m;
    m.count = n_;
    if (n_ == 0) {
        return m;
    }
    const double n = static_cast<double>(n_);
    m.mae = abs_err_ / n;
    m.rmse = std::sqrt(sq_err_ / n);
    if (mape_n_ > 0) {
        m.mape = 100.0 * mape_sum_ / static_cast<double>(mape_n_);
    }
    m.r2 = m2_ > 0 ? 1.0 - sq_err_ / m2_ : std::numeric_limits<double>::quiet_NaN();
    return m;
}

Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw ShapeError("metrics: " + std::to_string(y.size()) + " targets vs " + std::to_string(y_hat.size()) +
                         " predictions");
    }
    MetricsAccumulator acc;
    for (std::size_t i = 0; i < y.size(); ++i) {
        acc.add(y[i], y_hat[i]);
    }
    return acc.result();
}

CsvTable metrics_csv(const MetricsReport& report) {
    CsvTable t({"scope", "mae", "rmse", "mape", "r2", "count"});
    auto row = [&](const std::string& scope, const Metrics& m) {
        t.add_row({scope, format_double(m.mae), format_double(m.rmse), m.mape ? format_double(*m.mape) : "undefined",
                   format_double(m.r2), std::to_string(m.count)});
    };
    row("overall", report.overall);
    for (std::size_t k = 0; k < report.per_step.size(); ++k) {
        row("step_" + std::to_string(k + 1), report.per_step[k]);
    }
    return t;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ContractError("pearson: need two equal-length vectors of length >= 2");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) {
        return std::nullopt;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// --- fidelity ------------------------------------------------------------------------

Matrix batch_slice(const Tensor& t, std::size_t b) {
    if (t.rank() != 3 || b >= t.dim(0)) {
        throw ShapeError("batch_slice: bad slice " + std::to_string(b) + " of " + to_string(t.shape()));
    }
    const auto rows = static_cast<Eigen::Index>(t.dim(1));
    const auto cols = static_cast<Eigen::Index>(t.dim(2));
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    return Eigen::Map<const RowMat>(t.data().data() + b * t.dim(1) * t.dim(2), rows, cols);
}

Matrix projection_matrix(const Matrix& dist, const Matrix& agg) {
    if (dist.cols() != agg.rows() || dist.rows() != agg.cols()) {
        throw ShapeError("projection_matrix: A_dist is " + std::to_string(dist.rows()) + "x" +
                         std::to_string(dist.cols()) + ", A_agg is " + std::to_string(agg.rows()) + "x" +
                         std::to_string(agg.cols()));
    }
    return dist * agg;
}

double reconstruction_error(const Matrix& h, const Matrix& p) {
    const double norm = h.norm();
    if (norm == 0) {
        throw ContractError("reconstruction_error: H has zero Frobenius norm");
    }
    if (p.rows() != h.rows() || p.cols() != h.rows()) {
        throw ShapeError("reconstruction_error: projection does not match H");
    }
    return (h - p * h).norm() / norm;
}

double eckart_young_lower_bound(const Matrix& h, std::size_t agents) {
    Eigen::JacobiSVD<Matrix> svd(h);
    const auto& sigma = svd.singularValues();
    double total = 0, tail = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        const double s2 = sigma[i] * sigma[i];
        total += s2;
        if (static_cast<std::size_t>(i) >= agents) {
            tail += s2;
        }
    }
    return total > 0 ? std::sqrt(tail) / std::sqrt(total) : 0.0;
}

double nystrom_upper_first_term(const Matrix& h, std::size_t agents) {
    const Matrix gram = h * h.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    Eigen::VectorXd lambda = eig.eigenvalues().reverse();  // descending
    double tail = 0;
    for (Eigen::Index i = static_cast<Eigen::Index>(agents); i < lambda.size(); ++i) {
        const double l = std::max(lambda[i], 0.0);
        tail += l * l;
    }
    const double norm = h.norm();
    return norm > 0 ? std::sqrt(tail) / norm : 0.0;
}

std::vector<LayerFidelity> analyze_trace(const ForwardTrace& trace, std::size_t agents) {
    std::vector<LayerFidelity> out;
    for (std::size_t l = 0; l < trace.agg.size(); ++l) {
        const Tensor& h = trace.hidden[l];
        const std::size_t batch = h.dim(0);
        LayerFidelity lf;
        lf.layer = l + 1;
        lf.min_bound_slack = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < batch; ++b) {
            const Matrix hm = batch_slice(h, b);
            const Matrix p = projection_matrix(batch_slice(trace.dist[l], b), batch_slice(trace.agg[l], b));
            const double eps = reconstruction_error(hm, p);
            const double lb = eckart_young_lower_bound(hm, agents);
            lf.epsilon += eps;
            lf.lower_bound += lb;
            lf.upper_first_term += nystrom_upper_first_term(hm, agents);
            lf.min_bound_slack = std::min(lf.min_bound_slack, eps - lb);
        }
        const double n = static_cast<double>(batch);
        lf.epsilon /= n;
        lf.lower_bound /= n;
        lf.upper_first_term /= n;
        out.push_back(lf);
    }
    return out;
}

CsvTable fidelity_table(const std::vector<FidelityReport>& reports) {
    std::vector<std::string> header{"metric"};
    std::size_t layers = 0;
    for (const auto& r : reports) {
        header.push_back(r.label.empty() ? "a=" + std::to_string(r.agents) : r.label);
        layers = std::max(layers, r.layers.size());
    }
    CsvTable t(header);
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<std::string> row{"eps_" + std::to_string(l + 1)};
        for (const auto& r : reports) {
            row.push_back(l < r.layers.size() ? format_double(r.layers[l].epsilon) : "");
        }
        t.add_row(row);
    }
    auto summary = [&](const std::string& name, auto field) {
        std::vector<std::string> row{name};
        for (const auto& r : reports) {
            row.push_back(format_double(field(r)));
        }
        t.add_row(row);
    };
    summary("eps_avg", [](const FidelityReport& r) { return r.epsilon_avg; });
    summary("MAE", [](const FidelityReport& r) { return r.mae; });
    summary("RMSE", [](const FidelityReport& r) { return r.rmse; });
    return t;
}

CsvTable fidelity_details(const std::vector<FidelityReport>& reports) {
    CsvTable t({"label", "agents", "layer", "epsilon", "lower_bound", "upper_first_term", "min_bound_slack"});
    for (const auto& r : reports) {
        for (const auto& l : r.layers) {
            t.add_row({r.label, std::to_string(r.agents), std::to_string(l.layer), format_double(l.epsilon),
                       format_double(l.lower_bound), format_double(l.upper_first_term),
                       format_double(l.min_bound_slack)});
        }
    }
    return t;
}

// --- expert usage ------------------------------------------------------------------------

double entropy(std::span<const double> p) {
    double h = 0;
    for (double v : p) {
        if (v > 0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity: length mismatch");
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}

double ExpertProfile::mean_entropy() const {
    if (marginal_entropy.empty()) {
        return 0;
    }
    double total = 0;
    for (double h : marginal_entropy) {
        total += h;
    }
    return total / static_cast<double>(marginal_entropy.size());
}

void ExpertProfileBuilder::add(const ForwardTrace& trace) {
    if (sums_.empty()) {
        nodes_ = trace.gates[0].dim(1);
        experts_ = trace.gates[0].dim(2);
        sums_.assign(trace.gates.size(), std::vector<double>(nodes_ * experts_, 0.0));
    }
    if (trace.gates.size() != sums_.size()) {
        throw ShapeError("expert profile: layer count changed between traces");
    }
    for (std::size_t l = 0; l < trace.gates.size(); ++l) {
        const auto g = trace.gates[l].data();
        const std::size_t per = nodes_ * experts_;
        for (std::size_t i = 0; i < g.size(); ++i) {
            sums_[l][i % per] += g[i];
        }
    }
    samples_ += trace.gates[0].dim(0);
}

ExpertProfile ExpertProfileBuilder::result() const {
    ExpertProfile p;
    if (samples_ == 0) {
        return p;
    }
    for (const auto& layer : sums_) {
        std::vector<std::vector<double>> nodes(nodes_, std::vector<double>(experts_));
        std::vector<double> marginal(experts_, 0.0);
        for (std::size_t n = 0; n < nodes_; ++n) {
            for (std::size_t k = 0; k < experts_; ++k) {
                nodes[n][k] = layer[n * experts_ + k] / static_cast<double>(samples_);
                marginal[k] += nodes[n][k] / static_cast<double>(nodes_);
            }
        }
        p.marginal_entropy.push_back(entropy(marginal));
        p.node_means.push_back(std::move(nodes));
        p.marginal.push_back(std::move(marginal));
    }
    return p;
}

CsvTable expert_profile_csv(const ExpertProfile& profile) {
    const std::size_t e = profile.marginal.empty() ? 0 : profile.marginal[0].size();
    std::vector<std::string> header{"layer", "node"};
    for (std::size_t k = 0; k < e; ++k) {
        header.push_back("expert_" + std::to_string(k));
    }
    header.push_back("marginal_entropy");
    CsvTable t(header);
    for (std::size_t l = 0; l < profile.node_means.size(); ++l) {
        const std::string ent = format_double(profile.marginal_entropy[l]);
        for (std::size_t n = 0; n < profile.node_means[l].size(); ++n) {
            std::vector<std::string> row{std::to_string(l), std::to_string(n)};
            for (double v : profile.node_means[l][n]) {
                row.push_back(format_double(v));
            }
            row.push_back(ent);
            t.add_row(row);
        }
        std::vector<std::string> row{std::to_string(l), "marginal"};
        for (double v : profile.marginal[l]) {
            row.push_back(format_double(v));
        }
        row.push_back(ent);
        t.add_row(row);
    }
    return t;
}

}  // namespace fast

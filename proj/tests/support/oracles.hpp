#pragma once

// Independent reference computations used by the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fast/model.hpp"
#include "fast/tensor.hpp"

namespace oracle {

inline std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = dist(rng);
    }
    return v;
}

inline fast::Tensor random_tensor(fast::Shape shape, std::mt19937_64& rng, bool requires_grad = false,
                                  double lo = -1.0, double hi = 1.0) {
    const std::size_t n = fast::numel(shape);
    return fast::Tensor::from(std::move(shape), uniform(n, rng, lo, hi), requires_grad);
}

// Differences below the absolute floor count as exact.
inline double relative_error(double a, double b, double floor = 1e-8) {
    const double diff = std::abs(a - b);
    if (diff < floor) {
        return 0.0;
    }
    return diff / std::max(std::abs(a), std::abs(b));
}

struct GradCheck {
    double max_rel = 0;
    double max_abs = 0;
    std::size_t nonzero = 0;  // entries whose numeric gradient exceeds 1e-6 in magnitude
    double max_rel_large = 0;  // no floor, over entries with |numeric| > 1e-4
    std::string worst;
    std::size_t checked = 0;
};

// Compares the autodiff gradient of loss() against central differences for
// every element of every tensor in params.
inline GradCheck finite_difference_check(const std::function<fast::Tensor()>& loss,
                                         const std::vector<fast::NamedTensor>& params, double h = 1e-5,
                                         double floor = 1e-8) {
    for (const auto& p : params) {
        p.tensor.node()->grad.clear();
    }
    loss().backward();
    GradCheck out;
    for (const auto& p : params) {
        const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
        fast::Tensor handle = p.tensor;
        auto values = handle.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            double up = 0, down = 0;
            {
                fast::NoGradGuard guard;
                values[i] = keep + h;
                up = loss().item();
                values[i] = keep - h;
                down = loss().item();
            }
            values[i] = keep;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double rel = relative_error(a, numeric, floor);
            ++out.checked;
            out.max_abs = std::max(out.max_abs, std::abs(a - numeric));
            out.nonzero += std::abs(numeric) > 1e-6 ? 1 : 0;
            if (std::abs(numeric) > 1e-4) {
                out.max_rel_large = std::max(out.max_rel_large, relative_error(a, numeric, 0.0));
            }
            if (rel > out.max_rel) {
                out.max_rel = rel;
                out.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return out;
}

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Mat to_mat(std::span<const double> v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = v[offset + r * cols + c];
        }
    }
    return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One GLU expert with explicit loops: sigmoid(Z W2 + b2) * (Z W1 + b1).
inline Mat glu_expert(const Mat& z, const Mat& w_gate, const std::vector<double>& b_gate, const Mat& w_lin,
                      const std::vector<double>& b_lin) {
    const std::size_t n = z.rows(), din = z.cols(), d = w_gate.cols();
    Mat out(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double g = b_gate[c], l = b_lin[c];
            for (std::size_t k = 0; k < din; ++k) {
                g += z(r, k) * w_gate(k, c);
                l += z(r, k) * w_lin(k, c);
            }
            out(r, c) = sigmoid(g) * l;
        }
    }
    return out;
}

struct UnpackedExpert {
    Mat w_gate, w_lin;
    std::vector<double> b_gate, b_lin;
};

// Expert i's gate columns sit at [i d, (i+1) d), its linear columns at [e d + i d, e d + (i+1) d).
inline UnpackedExpert unpack_expert(const fast::ExpertParams& packed, std::size_t e, std::size_t i) {
    const std::size_t din = packed.weight.dim(0), width = packed.weight.dim(1), d = width / (2 * e);
    const Mat w = to_mat(packed.weight.data(), din, width);
    const auto b = packed.bias.data();
    UnpackedExpert u;
    u.w_gate = w.block(0, i * d, din, d);
    u.w_lin = w.block(0, e * d + i * d, din, d);
    u.b_gate.assign(b.begin() + i * d, b.begin() + (i + 1) * d);
    u.b_lin.assign(b.begin() + e * d + i * d, b.begin() + e * d + (i + 1) * d);
    return u;
}

inline std::vector<double> softmax(std::vector<double> row) {
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0;
    for (auto& v : row) {
        v = std::exp(v - m);
        s += v;
    }
    for (auto& v : row) {
        v /= s;
    }
    return row;
}

inline std::size_t numerical_rank(const Eigen::MatrixXd& m, double rel = 1e-10) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0) {
        return 0;
    }
    std::size_t r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel * s(0)) {
            ++r;
        }
    }
    return r;
}

inline fast::ModelConfig tiny_config() {
    fast::ModelConfig c;
    c.nodes = 8;
    c.input_steps = 12;
    c.horizon = 6;
    c.hidden = 8;
    c.experts = 2;
    c.agents = 4;
    c.layers = 2;
    c.steps_per_day = 12;
    return c;
}

inline fast::ModelInput random_input(const fast::ModelConfig& c, std::size_t batch, std::mt19937_64& rng) {
    fast::ModelInput in;
    in.x = random_tensor({batch, c.nodes, c.input_steps}, rng);
    for (std::size_t b = 0; b < batch; ++b) {
        in.tod.push_back(rng() % c.steps_per_day);
        in.dow.push_back(rng() % c.days_per_week);
    }
    return in;
}

// Perturbs every parameter so zero-initialised biases and unit gains also get exercised.
inline void jitter(const fast::ModelParams& params, std::mt19937_64& rng, double amount = 0.1) {
    std::uniform_real_distribution<double> dist(-amount, amount);
    for (auto p : params.named()) {
        for (auto& v : p.tensor.mutable_data()) {
            v += dist(rng);
        }
    }
}

}  // namespace oracle

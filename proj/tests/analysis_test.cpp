#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>
#include <random>
#include <sstream>

#include "fast/analysis.hpp"
#include "support/oracles.hpp"

using namespace fast;

namespace {

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(m);
    return qr.householderQ() * Matrix::Identity(n, n);
}

// H = U diag(sigma) V^T with random orthogonal U, V.
Matrix with_singular_values(const std::vector<double>& sigma, std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng) {
    Matrix s = Matrix::Zero(rows, cols);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        s(i, i) = sigma[i];
    }
    return random_orthogonal(rows, rng) * s * random_orthogonal(cols, rng).transpose();
}

Matrix random_stochastic(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0, 2);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(cols);
        for (auto& v : row) {
            v = dist(rng);
        }
        const auto s = oracle::softmax(row);
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = s[c];
        }
    }
    return m;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return m;
}

}  // namespace

TEST(Metrics, PerfectPrediction) {
    const std::vector<double> y{1, 2, 3, 4};
    const Metrics m = compute_metrics(y, y);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.rmse, 0.0);
    EXPECT_EQ(*m.mape, 0.0);
    EXPECT_DOUBLE_EQ(m.r2, 1.0);
}

TEST(Metrics, MeanPredictorHasZeroR2) {
    const std::vector<double> y{1, 2, 3, 6};
    const std::vector<double> mean(4, 3.0);
    EXPECT_NEAR(compute_metrics(y, mean).r2, 0.0, 1e-15);
}

TEST(Metrics, SinglePoint) {
    const std::vector<double> y{100}, yh{90};
    const Metrics m = compute_metrics(y, yh);
    EXPECT_DOUBLE_EQ(m.mae, 10.0);
    EXPECT_DOUBLE_EQ(m.rmse, 10.0);
    EXPECT_DOUBLE_EQ(*m.mape, 10.0);
}

TEST(Metrics, MaskedMapeIsUndefined) {
    const std::vector<double> y{0, 1e-7}, yh{1, 1};
    EXPECT_FALSE(compute_metrics(y, yh).mape.has_value());
    const std::vector<double> y2{0, 2}, yh2{1, 1};
    EXPECT_DOUBLE_EQ(*compute_metrics(y2, yh2).mape, 50.0);
}

TEST(Metrics, AccumulatorMatchesDirectFormulas) {
    std::mt19937_64 rng(1);
    const auto y = oracle::uniform(500, rng, 10, 200);
    auto yh = y;
    std::normal_distribution<double> noise(0, 8);
    for (auto& v : yh) {
        v += noise(rng);
    }
    double mae = 0, mse = 0, mape = 0, mean = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mae += std::abs(y[i] - yh[i]);
        mse += (y[i] - yh[i]) * (y[i] - yh[i]);
        mape += std::abs(y[i] - yh[i]) / std::abs(y[i]);
        mean += y[i];
    }
    mean /= 500;
    double tss = 0;
    for (double v : y) {
        tss += (v - mean) * (v - mean);
    }
    const Metrics m = compute_metrics(y, yh);
    EXPECT_NEAR(m.mae, mae / 500, 1e-12);
    EXPECT_NEAR(m.rmse, std::sqrt(mse / 500), 1e-12);
    EXPECT_NEAR(*m.mape, 100 * mape / 500, 1e-10);
    EXPECT_NEAR(m.r2, 1 - mse / tss, 1e-12);
    EXPECT_LE(m.mae, m.rmse);
    EXPECT_EQ(m.count, 500u);
}

TEST(Metrics, CsvLayout) {
    MetricsReport r;
    r.overall = compute_metrics(std::vector<double>{1, 2}, std::vector<double>{1, 3});
    r.per_step = {r.overall, r.overall};
    const std::string csv = metrics_csv(r).str();
    std::istringstream in(csv);
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    EXPECT_EQ(header, "scope,mae,rmse,mape,r2,count");
    EXPECT_EQ(first.substr(0, 8), "overall,");
    EXPECT_EQ(second.substr(0, 7), "step_1,");
}

TEST(Pearson, KnownValues) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> lin, neg;
    for (double v : x) {
        lin.push_back(2 * v + 3);
        neg.push_back(-v);
    }
    EXPECT_NEAR(*pearson(x, lin), 1.0, 1e-15);
    EXPECT_NEAR(*pearson(x, neg), -1.0, 1e-15);
    EXPECT_NEAR(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-15);
    EXPECT_FALSE(pearson(x, std::vector<double>(5, 2.0)).has_value());
}

TEST(Pearson, AffineInvariance) {
    std::mt19937_64 rng(2);
    const auto x = oracle::uniform(30, rng), y = oracle::uniform(30, rng);
    auto xs = x;
    for (auto& v : xs) {
        v = 3.5 * v - 7;
    }
    EXPECT_NEAR(*pearson(x, y), *pearson(xs, y), 1e-12);
}

TEST(Projection, IdentityFactors) {
    const Matrix eye = Matrix::Identity(5, 5);
    EXPECT_EQ(projection_matrix(eye, eye), eye);
}

TEST(Projection, StochasticFactorsGiveStochasticLowRank) {
    std::mt19937_64 rng(3);
    for (std::size_t a : {1u, 2u, 4u}) {
        const Matrix p = projection_matrix(random_stochastic(12, a, rng), random_stochastic(a, 12, rng));
        for (Eigen::Index r = 0; r < 12; ++r) {
            EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
        }
        EXPECT_LE(oracle::numerical_rank(p), a);
    }
}

TEST(Reconstruction, Extremes) {
    std::mt19937_64 rng(4);
    const Matrix h = random_matrix(6, 3, rng);
    EXPECT_EQ(reconstruction_error(h, Matrix::Identity(6, 6)), 0.0);
    EXPECT_DOUBLE_EQ(reconstruction_error(h, Matrix::Zero(6, 6)), 1.0);
    EXPECT_THROW(reconstruction_error(Matrix::Zero(6, 3), Matrix::Identity(6, 6)), ContractError);
}

TEST(Reconstruction, TopSingularProjectorAttainsBound) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix h = random_matrix(10, 6, rng);
        Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeThinU);
        for (std::size_t a = 0; a <= 6; ++a) {
            const Matrix u = svd.matrixU().leftCols(a);
            EXPECT_NEAR(reconstruction_error(h, u * u.transpose()), eckart_young_lower_bound(h, a), 1e-12);
        }
    }
}

TEST(EckartYoung, KnownSpectrum) {
    std::mt19937_64 rng(6);
    const Matrix h = with_singular_values({2, 1, 0}, 5, 3, rng);
    EXPECT_NEAR(eckart_young_lower_bound(h, 1), 1 / std::sqrt(5.0), 1e-12);
    EXPECT_NEAR(eckart_young_lower_bound(h, 2), 0.0, 1e-12);
    EXPECT_NEAR(eckart_young_lower_bound(h, 3), 0.0, 1e-12);
    EXPECT_NEAR(eckart_young_lower_bound(h, 0), 1.0, 1e-12);
}

TEST(EckartYoung, BoundsRandomLowRankProjections) {
    std::mt19937_64 rng(7);
    const Matrix h = random_matrix(16, 8, rng);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t a = 1 + trial % 6;
        const Matrix p = projection_matrix(random_stochastic(16, a, rng), random_stochastic(a, 16, rng));
        EXPECT_GE(reconstruction_error(h, p), eckart_young_lower_bound(h, a) - 1e-9);
    }
}

TEST(Nystrom, KnownSpectrum) {
    std::mt19937_64 rng(8);
    const Matrix h = with_singular_values({2, 1}, 4, 2, rng);
    EXPECT_NEAR(nystrom_upper_first_term(h, 1), 1 / std::sqrt(5.0), 1e-12);
    EXPECT_NEAR(nystrom_upper_first_term(h, 2), 0.0, 1e-12);
    const Matrix g = with_singular_values({3, 2, 0.5}, 6, 3, rng);
    const double expected = std::sqrt(std::pow(2.0, 4) + std::pow(0.5, 4)) / std::sqrt(9 + 4 + 0.25);
    EXPECT_NEAR(nystrom_upper_first_term(g, 1), expected, 1e-12);
}

TEST(Nystrom, MatchesSingularValueIdentity) {
    std::mt19937_64 rng(9);
    const Matrix h = random_matrix(9, 4, rng);
    Eigen::JacobiSVD<Matrix> svd(h);
    const auto& s = svd.singularValues();
    for (std::size_t a = 0; a <= 4; ++a) {
        double tail = 0;
        for (Eigen::Index i = a; i < s.size(); ++i) {
            tail += std::pow(s(i), 4);
        }
        EXPECT_NEAR(nystrom_upper_first_term(h, a), std::sqrt(tail) / h.norm(), 1e-10);
    }
}

TEST(Entropy, UniformAndOneHot) {
    EXPECT_NEAR(entropy(std::vector<double>(8, 0.125)), std::log(8.0), 1e-15);
    EXPECT_EQ(entropy(std::vector<double>{0, 1, 0}), 0.0);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{2, 0}), 1.0, 1e-15);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0, 1e-15);
}

TEST(Fidelity, TraceAnalysisRespectsBound) {
    std::mt19937_64 rng(10);
    const ModelConfig c = oracle::tiny_config();
    const ModelParams p = ModelParams::initialize(c, 3);
    oracle::jitter(p, rng, 0.3);
    NoGradGuard guard;
    const auto r = forward(oracle::random_input(c, 4, rng), p);
    const auto layers = analyze_trace(r.trace, c.agents);
    ASSERT_EQ(layers.size(), 2u);
    for (const auto& l : layers) {
        EXPECT_GE(l.epsilon, 0.0);
        EXPECT_GE(l.epsilon, l.lower_bound - 1e-9);
        EXPECT_GE(l.min_bound_slack, -1e-9);
    }
    // layer 1 uses H^0 of sample 0 as reference
    const Matrix h0 = batch_slice(r.trace.hidden[0], 0);
    const Matrix pm = projection_matrix(batch_slice(r.trace.dist[0], 0), batch_slice(r.trace.agg[0], 0));
    double mean_eps = 0;
    for (std::size_t b = 0; b < 4; ++b) {
        const Matrix hb = batch_slice(r.trace.hidden[0], b);
        mean_eps += reconstruction_error(
            hb, projection_matrix(batch_slice(r.trace.dist[0], b), batch_slice(r.trace.agg[0], b)));
    }
    EXPECT_NEAR(layers[0].epsilon, mean_eps / 4, 1e-12);
    EXPECT_GE(reconstruction_error(h0, pm), eckart_young_lower_bound(h0, c.agents) - 1e-9);
}

TEST(Fidelity, TableLayout) {
    FidelityReport a{"a=4", 4, {{1, 0.5, 0.1, 0.05, 0.4}, {2, 0.7, 0.2, 0.1, 0.5}}, 0.6, 3.0, 4.0};
    FidelityReport b{"a=8", 8, {{1, 0.3, 0.1, 0.05, 0.2}, {2, 0.5, 0.2, 0.1, 0.3}}, 0.4, 2.0, 3.0};
    std::istringstream in(fidelity_table({a, b}).str());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0], "metric,a=4,a=8");
    EXPECT_EQ(lines[1].substr(0, 6), "eps_1,");
    EXPECT_EQ(lines[2].substr(0, 6), "eps_2,");
    EXPECT_EQ(lines[3], "eps_avg,0.59999999999999998,0.40000000000000002");
    EXPECT_EQ(lines[4], "MAE,3,2");
    EXPECT_EQ(lines[5], "RMSE,4,3");
    EXPECT_EQ(fidelity_details({a, b}).rows(), 4u);
}

TEST(ExpertProfile, BuilderAveragesGates) {
    ForwardTrace t;
    t.gates.push_back(Tensor::from({2, 2, 2}, {1, 0, 0.5, 0.5, 0, 1, 0.5, 0.5}));
    ExpertProfileBuilder b;
    b.add(t);
    const ExpertProfile p = b.result();
    ASSERT_EQ(p.node_means.size(), 1u);
    EXPECT_DOUBLE_EQ(p.node_means[0][0][0], 0.5);
    EXPECT_DOUBLE_EQ(p.node_means[0][1][1], 0.5);
    EXPECT_DOUBLE_EQ(p.marginal[0][0], 0.5);
    EXPECT_NEAR(p.marginal_entropy[0], std::log(2.0), 1e-15);
    const std::string csv = expert_profile_csv(p).str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,node,expert_0,expert_1,marginal_entropy");
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fast/tensor.hpp"

namespace fast {

// How the router scores experts.
enum class RouterMode {
    // softmax(X W + R_S + R_T[tod] + R_W[dow]) on the raw window X.
    kHeterogeneityAware,
    // softmax(Z W) on the sublayer input, no spatial or temporal biases.
    kHiddenState,
};

std::string to_string(RouterMode mode);
RouterMode parse_router_mode(const std::string& text);

struct ModelConfig {
    std::size_t nodes = 0;          // N
    std::size_t input_steps = 96;   // T
    std::size_t horizon = 48;       // P
    std::size_t hidden = 64;        // d
    std::size_t experts = 8;        // e
    std::size_t agents = 32;        // a
    std::size_t layers = 3;         // L
    std::size_t steps_per_day = 96;
    std::size_t days_per_week = 7;
    RouterMode router = RouterMode::kHeterogeneityAware;

    // Throws ContractError on zero sizes. Returns warnings (e.g. agents > nodes).
    std::vector<std::string> validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct RouterParams {
    Tensor weight;         // din x e (T x e when heterogeneity-aware)
    Tensor spatial_bias;   // N x e
    Tensor tod_bias;       // steps_per_day x e
    Tensor dow_bias;       // days_per_week x e
};

// Experts packed as [gates of expert 0..e-1 | linears of expert 0..e-1],
// each block d columns wide.
struct ExpertParams {
    Tensor weight;  // din x 2ed
    Tensor bias;    // 2ed
};

struct MoeParams {
    RouterParams router;
    ExpertParams experts;
};

struct AttentionParams {
    Tensor agents;      // a x d
    Tensor agg_query;   // d x d, applied to agents
    Tensor agg_key;     // d x d, applied to nodes
    Tensor dist_query;  // d x d, applied to nodes
    Tensor dist_key;    // d x d, applied to agents
    Tensor value;       // d x d
};

struct BlockParams {
    AttentionParams attention;
    Tensor attention_norm_gain;
    MoeParams moe;
    Tensor moe_norm_gain;
};

struct HeadParams {
    Tensor w1;  // Ld x Ld
    Tensor b1;  // Ld
    Tensor w2;  // Ld x P
    Tensor b2;  // P
};

class ModelParams {
   public:
    ModelParams() = default;

    // Uniform(+-1/sqrt(fan_in)) for weight matrices; N(0, 0.02^2) for
    // embeddings, agent tokens and router biases; zero additive biases;
    // unit norm gains.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
    // Zero-filled tensors with the right shapes (checkpoint loading).
    static ModelParams allocate(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    Tensor node_embedding;  // N x d
    Tensor tod_embedding;   // steps_per_day x d
    Tensor dow_embedding;   // days_per_week x d
    MoeParams input_moe;
    std::vector<BlockParams> blocks;
    HeadParams head;

    // Every trainable tensor under a stable dotted name, in a fixed order.
    std::vector<NamedTensor> named() const;
    Tensor find(const std::string& name) const;
    std::size_t parameter_count() const;

    // Fresh tensors with copied values.
    ModelParams clone() const;
    void zero_grad();

   private:
    ModelConfig config_;
};

// Per-layer states retained by forward(). Index 0 of hidden/gates is the
// input layer; attention entries and z start at block 1 (stored at index 0).
struct ForwardTrace {
    std::vector<Tensor> hidden;  // H^0..H^L, each [B,N,d]
    std::vector<Tensor> z;       // Z^1..Z^L
    std::vector<Tensor> gates;   // G^0..G^L, each [B,N,e]
    std::vector<Tensor> agg;     // A_agg^1..A_agg^L, each [B,a,N]
    std::vector<Tensor> dist;    // A_dist^1..A_dist^L, each [B,N,a]
};

// Instrumentation filled by forward() when requested.
struct ForwardStats {
    double attention_seconds = 0;
    double moe_seconds = 0;
    // Largest single tensor created inside any attention call.
    std::size_t attention_peak_elements = 0;
    // Largest single tensor created during the whole forward pass.
    std::size_t forward_peak_elements = 0;
    std::size_t forward_total_elements = 0;
};

// Model input for a batch: x is [B,N,T]; tod/dow hold one index per sample.
struct ModelInput {
    Tensor x;
    std::vector<std::size_t> tod;
    std::vector<std::size_t> dow;
};

struct ForwardResult {
    Tensor prediction;  // [B,N,P]
    ForwardTrace trace;
};

// Individual stages, batched over the leading axis.
Tensor ha_router(const Tensor& x, const Tensor& z, std::span<const std::size_t> tod,
                 std::span<const std::size_t> dow, const RouterParams& router, RouterMode mode);
// [B,N,din] -> [B,N,e,d] using the packed layout.
Tensor parallel_glu_experts(const Tensor& z, const ExpertParams& experts, std::size_t num_experts);
// Gate-weighted sum over experts: [B,N,e] x [B,N,e,d] -> [B,N,d].
Tensor mix_experts(const Tensor& gates, const Tensor& expert_outputs);

struct MoeOutput {
    Tensor output;  // [B,N,d]
    Tensor gates;   // [B,N,e]
};
MoeOutput ha_moe(const Tensor& z, const Tensor& x, std::span<const std::size_t> tod,
                 std::span<const std::size_t> dow, const MoeParams& moe, const ModelConfig& config);

struct AttentionOutput {
    Tensor output;  // [B,N,d]
    Tensor agg;     // [B,a,N]
    Tensor dist;    // [B,N,a]
};
// Never materializes an N x N product.
AttentionOutput aga_attention(const Tensor& h, const AttentionParams& attention);

Tensor embed_input(const ModelInput& input, const ModelParams& params, ForwardTrace* trace = nullptr,
                   ForwardStats* stats = nullptr);

struct BlockOutput {
    Tensor hidden;
    Tensor z;
    Tensor gates;
    Tensor agg;
    Tensor dist;
};
BlockOutput backbone_block(const Tensor& h_prev, const ModelInput& input, const BlockParams& block,
                           const ModelConfig& config, ForwardStats* stats = nullptr);

// Throws NumericError naming the first stage that produced a non-finite value.
ForwardResult forward(const ModelInput& input, const ModelParams& params, ForwardStats* stats = nullptr);

}  // namespace fast

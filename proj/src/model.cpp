#include "fast/model.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace fast {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void check_finite(const Tensor& t, const std::string& stage) {
    if (!all_finite(t.data())) {
        throw NumericError("non-finite value produced by " + stage);
    }
}

std::size_t batch_of(const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError("expected a [B,N,*] tensor, got " + to_string(x.shape()));
    }
    return x.dim(0);
}

// [B, c] rows picked from a table, viewed as [B,1,c] for broadcasting over nodes.
Tensor lookup(const Tensor& table, std::span<const std::size_t> index) {
    return reshape(gather_rows(table, index), {index.size(), 1, table.dim(1)});
}

void append_moe(std::vector<NamedTensor>& out, const std::string& prefix, const MoeParams& moe) {
    out.push_back({prefix + ".router.weight", moe.router.weight});
    if (moe.router.spatial_bias) {
        out.push_back({prefix + ".router.spatial_bias", moe.router.spatial_bias});
        out.push_back({prefix + ".router.tod_bias", moe.router.tod_bias});
        out.push_back({prefix + ".router.dow_bias", moe.router.dow_bias});
    }
    out.push_back({prefix + ".experts.weight", moe.experts.weight});
    out.push_back({prefix + ".experts.bias", moe.experts.bias});
}

MoeParams allocate_moe(const ModelConfig& c, std::size_t din, std::size_t router_in) {
    MoeParams moe;
    moe.router.weight = Tensor::zeros({router_in, c.experts}, true);
    if (c.router == RouterMode::kHeterogeneityAware) {
        moe.router.spatial_bias = Tensor::zeros({c.nodes, c.experts}, true);
        moe.router.tod_bias = Tensor::zeros({c.steps_per_day, c.experts}, true);
        moe.router.dow_bias = Tensor::zeros({c.days_per_week, c.experts}, true);
    }
    moe.experts.weight = Tensor::zeros({din, 2 * c.experts * c.hidden}, true);
    moe.experts.bias = Tensor::zeros({2 * c.experts * c.hidden}, true);
    return moe;
}

}  // namespace

std::string to_string(RouterMode mode) {
    return mode == RouterMode::kHeterogeneityAware ? "heterogeneity_aware" : "hidden_state";
}

RouterMode parse_router_mode(const std::string& text) {
    if (text == "heterogeneity_aware" || text == "ha") {
        return RouterMode::kHeterogeneityAware;
    }
    if (text == "hidden_state" || text == "hidden") {
        return RouterMode::kHiddenState;
    }
    throw ContractError("unknown router mode '" + text + "'");
}

std::vector<std::string> ModelConfig::validate() const {
    const std::pair<const char*, std::size_t> sizes[] = {
        {"nodes", nodes},   {"input_steps", input_steps},     {"horizon", horizon},
        {"hidden", hidden}, {"experts", experts},             {"agents", agents},
        {"layers", layers}, {"steps_per_day", steps_per_day}, {"days_per_week", days_per_week}};
    for (const auto& [name, value] : sizes) {
        if (value == 0) {
            throw ContractError(std::string("model config: ") + name + " must be positive");
        }
    }
    std::vector<std::string> warnings;
    if (agents > nodes) {
        warnings.push_back("agents (" + std::to_string(agents) + ") exceed nodes (" + std::to_string(nodes) + ")");
    }
    return warnings;
}

// --- parameters ---------------------------------------------------------------

ModelParams ModelParams::allocate(const ModelConfig& c) {
    c.validate();
    ModelParams p;
    p.config_ = c;
    const std::size_t d = c.hidden;
    p.node_embedding = Tensor::zeros({c.nodes, d}, true);
    p.tod_embedding = Tensor::zeros({c.steps_per_day, d}, true);
    p.dow_embedding = Tensor::zeros({c.days_per_week, d}, true);
    p.input_moe = allocate_moe(c, c.input_steps, c.input_steps);
    const std::size_t router_in = c.router == RouterMode::kHeterogeneityAware ? c.input_steps : d;
    for (std::size_t l = 0; l < c.layers; ++l) {
        BlockParams b;
        b.attention.agents = Tensor::zeros({c.agents, d}, true);
        b.attention.agg_query = Tensor::zeros({d, d}, true);
        b.attention.agg_key = Tensor::zeros({d, d}, true);
        b.attention.dist_query = Tensor::zeros({d, d}, true);
        b.attention.dist_key = Tensor::zeros({d, d}, true);
        b.attention.value = Tensor::zeros({d, d}, true);
        b.attention_norm_gain = Tensor::full({d}, 1.0, true);
        b.moe = allocate_moe(c, d, router_in);
        b.moe_norm_gain = Tensor::full({d}, 1.0, true);
        p.blocks.push_back(std::move(b));
    }
    const std::size_t u = c.layers * d;
    p.head.w1 = Tensor::zeros({u, u}, true);
    p.head.b1 = Tensor::zeros({u}, true);
    p.head.w2 = Tensor::zeros({u, c.horizon}, true);
    p.head.b2 = Tensor::zeros({c.horizon}, true);
    return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = allocate(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> small(0.0, 0.02);
    for (auto& [name, t] : p.named()) {
        auto values = t.mutable_data();
        if (ends_with(name, ".gain")) {
            std::fill(values.begin(), values.end(), 1.0);
        } else if (ends_with(name, ".bias")) {
            std::fill(values.begin(), values.end(), 0.0);
        } else if (ends_with(name, "_bias") || starts_with(name, "embedding.") || ends_with(name, ".agents")) {
            for (auto& v : values) {
                v = small(rng);
            }
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
            std::uniform_real_distribution<double> uniform(-bound, bound);
            for (auto& v : values) {
                v = uniform(rng);
            }
        }
    }
    return p;
}

std::vector<NamedTensor> ModelParams::named() const {
    std::vector<NamedTensor> out;
    out.push_back({"embedding.node", node_embedding});
    out.push_back({"embedding.time_of_day", tod_embedding});
    out.push_back({"embedding.day_of_week", dow_embedding});
    append_moe(out, "layer0", input_moe);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i + 1);
        const auto& b = blocks[i];
        out.push_back({prefix + ".attention.agents", b.attention.agents});
        out.push_back({prefix + ".attention.agg_query", b.attention.agg_query});
        out.push_back({prefix + ".attention.agg_key", b.attention.agg_key});
        out.push_back({prefix + ".attention.dist_query", b.attention.dist_query});
        out.push_back({prefix + ".attention.dist_key", b.attention.dist_key});
        out.push_back({prefix + ".attention.value", b.attention.value});
        out.push_back({prefix + ".attention_norm.gain", b.attention_norm_gain});
        append_moe(out, prefix, b.moe);
        out.push_back({prefix + ".moe_norm.gain", b.moe_norm_gain});
    }
    out.push_back({"head.fc1.weight", head.w1});
    out.push_back({"head.fc1.bias", head.b1});
    out.push_back({"head.fc2.weight", head.w2});
    out.push_back({"head.fc2.bias", head.b2});
    return out;
}

Tensor ModelParams::find(const std::string& name) const {
    for (auto& nt : named()) {
        if (nt.name == name) {
            return nt.tensor;
        }
    }
    throw ContractError("no parameter named '" + name + "'");
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& nt : named()) {
        total += nt.tensor.numel();
    }
    return total;
}

ModelParams ModelParams::clone() const {
    ModelParams copy = allocate(config_);
    auto src = named();
    auto dst = copy.named();
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto out = dst[i].tensor.mutable_data();
        std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), out.begin());
    }
    return copy;
}

void ModelParams::zero_grad() {
    for (auto& nt : named()) {
        nt.tensor.zero_grad();
    }
}

// --- stages -------------------------------------------------------------------

Tensor ha_router(const Tensor& x, const Tensor& z, std::span<const std::size_t> tod,
                 std::span<const std::size_t> dow, const RouterParams& router, RouterMode mode) {
    if (mode == RouterMode::kHiddenState) {
        return softmax_rows(matmul(z, router.weight));
    }
    const std::size_t batch = batch_of(x);
    if (tod.size() != batch || dow.size() != batch) {
        throw ContractError("ha_router: need one time-of-day and day-of-week index per sample");
    }
    Tensor scores = matmul(x, router.weight) + router.spatial_bias;
    scores = scores + lookup(router.tod_bias, tod);
    scores = scores + lookup(router.dow_bias, dow);
    return softmax_rows(scores);
}

Tensor parallel_glu_experts(const Tensor& z, const ExpertParams& experts, std::size_t num_experts) {
    const std::size_t width = experts.weight.dim(1);
    if (num_experts == 0 || width % (2 * num_experts) != 0 || experts.bias.numel() != width) {
        throw ShapeError("parallel_glu_experts: packed weight " + to_string(experts.weight.shape()) + " and bias " +
                         to_string(experts.bias.shape()) + " do not hold " + std::to_string(num_experts) +
                         " experts");
    }
    const std::size_t d = width / (2 * num_experts);
    auto [gate, linear] = split_last(matmul(z, experts.weight) + experts.bias);
    Tensor glu = sigmoid(gate) * linear;
    Shape out = z.shape();
    out.back() = num_experts;
    out.push_back(d);
    return reshape(glu, out);
}

Tensor mix_experts(const Tensor& gates, const Tensor& expert_outputs) {
    const Shape& es = expert_outputs.shape();
    if (es.size() != 4 || gates.rank() != 3 || gates.dim(0) != es[0] || gates.dim(1) != es[1] ||
        gates.dim(2) != es[2]) {
        throw ShapeError("mix_experts: gates " + to_string(gates.shape()) + " incompatible with experts " +
                         to_string(es));
    }
    const std::size_t rows = es[0] * es[1];
    Tensor g = reshape(gates, {rows, 1, es[2]});
    Tensor e = reshape(expert_outputs, {rows, es[2], es[3]});
    return reshape(matmul(g, e), {es[0], es[1], es[3]});
}

MoeOutput ha_moe(const Tensor& z, const Tensor& x, std::span<const std::size_t> tod,
                 std::span<const std::size_t> dow, const MoeParams& moe, const ModelConfig& config) {
    Tensor gates = ha_router(x, z, tod, dow, moe.router, config.router);
    Tensor experts = parallel_glu_experts(z, moe.experts, config.experts);
    return {mix_experts(gates, experts), gates};
}

AttentionOutput aga_attention(const Tensor& h, const AttentionParams& p) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.shape().back()));
    // Agents query nodes: [a,d] x [B,N,d]^T -> [B,a,N].
    Tensor agent_queries = matmul(p.agents, p.agg_query);
    Tensor node_keys = matmul(h, p.agg_key);
    Tensor agg = softmax_rows(scale(matmul(agent_queries, node_keys, false, true), inv_sqrt_d));
    // Nodes query agents: [B,N,d] x [a,d]^T -> [B,N,a].
    Tensor node_queries = matmul(h, p.dist_query);
    Tensor agent_keys = matmul(p.agents, p.dist_key);
    Tensor dist = softmax_rows(scale(matmul(node_queries, agent_keys, false, true), inv_sqrt_d));
    Tensor values = matmul(h, p.value);
    Tensor summary = matmul(agg, values);  // [B,a,d]
    return {matmul(dist, summary), agg, dist};
}

Tensor embed_input(const ModelInput& input, const ModelParams& params, ForwardTrace* trace, ForwardStats* stats) {
    const ModelConfig& c = params.config();
    const Tensor& x = input.x;
    if (batch_of(x) == 0 || x.dim(1) != c.nodes || x.dim(2) != c.input_steps) {
        throw ShapeError("embed_input: expected [B," + std::to_string(c.nodes) + "," +
                         std::to_string(c.input_steps) + "], got " + to_string(x.shape()));
    }
    for (std::size_t i = 0; i < input.tod.size(); ++i) {
        if (input.tod[i] >= c.steps_per_day || i >= input.dow.size() || input.dow[i] >= c.days_per_week) {
            throw ContractError("embed_input: time index out of range for sample " + std::to_string(i));
        }
    }
    const auto start = Clock::now();
    MoeOutput moe = ha_moe(x, x, input.tod, input.dow, params.input_moe, c);
    if (stats) {
        stats->moe_seconds += seconds_since(start);
    }
    Tensor h = moe.output + params.node_embedding;
    h = h + lookup(params.tod_embedding, input.tod);
    h = h + lookup(params.dow_embedding, input.dow);
    if (trace) {
        trace->gates.push_back(moe.gates);
    }
    return h;
}

BlockOutput backbone_block(const Tensor& h_prev, const ModelInput& input, const BlockParams& block,
                           const ModelConfig& config, ForwardStats* stats) {
    BlockOutput out;
    auto start = Clock::now();
    {
        AllocationProbe probe;
        AttentionOutput att = aga_attention(h_prev, block.attention);
        out.agg = att.agg;
        out.dist = att.dist;
        out.z = rmsnorm(att.output + h_prev, block.attention_norm_gain);
        if (stats) {
            stats->attention_peak_elements = std::max(stats->attention_peak_elements, probe.peak_tensor_elements());
        }
    }
    if (stats) {
        stats->attention_seconds += seconds_since(start);
        start = Clock::now();
    }
    MoeOutput moe = ha_moe(out.z, input.x, input.tod, input.dow, block.moe, config);
    out.gates = moe.gates;
    out.hidden = rmsnorm(moe.output + out.z, block.moe_norm_gain);
    if (stats) {
        stats->moe_seconds += seconds_since(start);
    }
    return out;
}

ForwardResult forward(const ModelInput& input, const ModelParams& params, ForwardStats* stats) {
    const ModelConfig& c = params.config();
    AllocationProbe probe;
    check_finite(input.x, "model input");
    ForwardResult result;
    ForwardTrace& trace = result.trace;
    Tensor h = embed_input(input, params, &trace, stats);
    check_finite(h, "input embedding (layer 0)");
    trace.hidden.push_back(h);
    for (std::size_t l = 0; l < c.layers; ++l) {
        BlockOutput b = backbone_block(h, input, params.blocks[l], c, stats);
        const std::string layer = "layer " + std::to_string(l + 1);
        check_finite(b.z, layer + " attention sublayer");
        check_finite(b.hidden, layer + " mixture-of-experts sublayer");
        h = b.hidden;
        trace.hidden.push_back(b.hidden);
        trace.z.push_back(b.z);
        trace.gates.push_back(b.gates);
        trace.agg.push_back(b.agg);
        trace.dist.push_back(b.dist);
    }
    std::vector<Tensor> layers(trace.hidden.begin() + 1, trace.hidden.end());
    Tensor u = concat_last(layers);
    Tensor hidden = relu(matmul(u, params.head.w1) + params.head.b1);
    result.prediction = matmul(hidden, params.head.w2) + params.head.b2;
    check_finite(result.prediction, "prediction head");
    if (stats) {
        stats->forward_peak_elements = std::max(stats->forward_peak_elements, probe.peak_tensor_elements());
        stats->forward_total_elements += probe.total_elements();
    }
    return result;
}

}  // namespace fast

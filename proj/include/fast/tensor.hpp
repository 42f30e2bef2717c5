#pragma once

// Dense 64-bit tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle to a graph node. Operators record their inputs
// and a backward closure whenever at least one input requires a gradient;
// calling backward() on a scalar result walks the recorded graph once in
// reverse topological order and accumulates into every leaf's grad buffer.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fast {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    explicit operator bool() const { return static_cast<bool>(node_); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Direct write access; only meaningful for leaves (parameters, inputs).
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    // Zero-length span when no gradient has been accumulated.
    std::span<const double> grad() const;
    void zero_grad();

    // Populates grads on every requires_grad tensor reachable from this
    // scalar. The recorded graph is released afterwards; a second call throws.
    void backward() const;

    // Same storage, detached from the graph.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

   private:
    std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

bool grad_recording_enabled();

// Observes every tensor produced by an operator on this thread while alive.
// Probes nest; each one sees all allocations made during its own lifetime.
class AllocationProbe {
   public:
    AllocationProbe();
    ~AllocationProbe();
    AllocationProbe(const AllocationProbe&) = delete;
    AllocationProbe& operator=(const AllocationProbe&) = delete;

    std::size_t peak_tensor_elements() const { return peak_; }
    std::size_t total_elements() const { return total_; }
    std::size_t tensor_count() const { return count_; }
    const Shape& largest_shape() const { return largest_; }

    static void record(const Shape& shape, std::size_t elements);

   private:
    std::size_t peak_ = 0;
    std::size_t total_ = 0;
    std::size_t count_ = 0;
    Shape largest_;
    AllocationProbe* parent_;
};

// ---------------------------------------------------------------------------
// Operators. Binary elementwise operators broadcast numpy-style, aligning
// shapes from the right. Batched operators accept rank-2 or rank-3 operands;
// a rank-2 operand is shared across the batch.

// C = op(A) * op(B) where op transposes the last two axes when requested.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
// Pointwise Huber penalty of a residual tensor.
Tensor huber(const Tensor& residual, double delta);

// Softmax over the last axis, stabilized by subtracting the row maximum.
Tensor softmax_rows(const Tensor& x);

inline constexpr double kRmsNormEpsilon = 1e-8;
// gain * x / sqrt(mean(x^2) + eps) over the last axis.
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = kRmsNormEpsilon);

Tensor reshape(const Tensor& x, Shape shape);
// Splits the last axis into two equal halves.
std::pair<Tensor, Tensor> split_last(const Tensor& x);
Tensor concat_last(const std::vector<Tensor>& parts);
// Picks rows of a rank-2 table: result[i, :] = table[indices[i], :].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// True when every value is finite.
bool all_finite(std::span<const double> values);

}  // namespace fast

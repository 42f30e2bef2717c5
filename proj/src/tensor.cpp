#include "fast/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace fast {

namespace {

thread_local bool g_recording = true;
thread_local AllocationProbe* g_probe = nullptr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C(m x n) (+)= op(A) * op(B); A is stored a_rows x a_cols, B likewise.
void gemm(const double* a, std::size_t a_rows, std::size_t a_cols, bool ta, const double* b,
          std::size_t b_rows, std::size_t b_cols, bool tb, double* c, bool accumulate) {
    const auto ea = static_cast<Eigen::Index>(a_rows), eb = static_cast<Eigen::Index>(a_cols);
    const auto fa = static_cast<Eigen::Index>(b_rows), fb = static_cast<Eigen::Index>(b_cols);
    ConstMap A(a, ea, eb);
    ConstMap B(b, fa, fb);
    const Eigen::Index m = ta ? eb : ea;
    const Eigen::Index n = tb ? fa : fb;
    MutMap C(c, m, n);
    auto run = [&](const auto& lhs, const auto& rhs) {
        if (accumulate) {
            C.noalias() += lhs * rhs;
        } else {
            C.noalias() = lhs * rhs;
        }
    };
    if (!ta && !tb) {
        run(A, B);
    } else if (!ta && tb) {
        run(A, B.transpose());
    } else if (ta && !tb) {
        run(A.transpose(), B);
    } else {
        run(A.transpose(), B.transpose());
    }
}

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<std::shared_ptr<detail::Node>> inputs) {
    auto node = std::make_shared<detail::Node>();
    const std::size_t n = numel(shape);
    node->value.assign(n, 0.0);
    AllocationProbe::record(shape, n);
    node->shape = std::move(shape);
    if (g_recording) {
        const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in->requires_grad; });
        if (needs) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
        }
    }
    return node;
}

void require(const Tensor& t, const char* op) {
    if (!t) {
        throw ContractError(std::string(op) + ": null tensor");
    }
}

void accumulate(detail::Node& target, std::span<const double> delta) {
    if (!target.requires_grad) {
        return;
    }
    auto& g = target.grad_buffer();
    for (std::size_t i = 0; i < delta.size(); ++i) {
        g[i] += delta[i];
    }
}

// Broadcast geometry of a binary elementwise op.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_strides;
    std::vector<std::size_t> b_strides;
    enum class Kind { kSame, kSuffixB, kSuffixA, kGeneral } kind = Kind::kGeneral;
};

std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    const std::size_t offset = out.size() - s.size();
    for (std::size_t k = s.size(); k-- > 0;) {
        strides[k + offset] = s[k] == 1 ? 0 : stride;
        stride *= s[k];
    }
    return strides;
}

// True when `small` (leading unit axes stripped) equals the trailing axes of `out`.
bool is_suffix(const Shape& small, const Shape& out) {
    std::size_t first = 0;
    while (first < small.size() && small[first] == 1) {
        ++first;
    }
    const std::size_t len = small.size() - first;
    if (len > out.size()) {
        return false;
    }
    return std::equal(small.begin() + static_cast<std::ptrdiff_t>(first), small.end(),
                      out.end() - static_cast<std::ptrdiff_t>(len));
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
    Broadcast bc;
    const std::size_t r = std::max(a.size(), b.size());
    bc.out.assign(r, 1);
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t da = k + a.size() >= r ? a[k + a.size() - r] : 1;
        const std::size_t db = k + b.size() >= r ? b[k + b.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                             " do not broadcast");
        }
        bc.out[k] = std::max(da, db);
    }
    bc.a_strides = broadcast_strides(a, bc.out);
    bc.b_strides = broadcast_strides(b, bc.out);
    if (a == b) {
        bc.kind = Broadcast::Kind::kSame;
    } else if (numel(a) == numel(bc.out) && is_suffix(b, bc.out)) {
        bc.kind = Broadcast::Kind::kSuffixB;
    } else if (numel(b) == numel(bc.out) && is_suffix(a, bc.out)) {
        bc.kind = Broadcast::Kind::kSuffixA;
    }
    return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& bc, std::size_t na, std::size_t nb, F&& f) {
    const std::size_t n = numel(bc.out);
    switch (bc.kind) {
        case Broadcast::Kind::kSame:
            for (std::size_t i = 0; i < n; ++i) {
                f(i, i, i);
            }
            return;
        case Broadcast::Kind::kSuffixB:
            for (std::size_t i = 0; i < n; ++i) {
                f(i, i, i % nb);
            }
            return;
        case Broadcast::Kind::kSuffixA:
            for (std::size_t i = 0; i < n; ++i) {
                f(i, i % na, i);
            }
            return;
        case Broadcast::Kind::kGeneral:
            break;
    }
    const std::size_t r = bc.out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t k = r; k-- > 0;) {
            if (++idx[k] < bc.out[k]) {
                ia += bc.a_strides[k];
                ib += bc.b_strides[k];
                break;
            }
            ia -= bc.a_strides[k] * (bc.out[k] - 1);
            ib -= bc.b_strides[k] * (bc.out[k] - 1);
            idx[k] = 0;
        }
    }
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da, DB db) {
    require(a, op);
    require(b, op);
    auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
    auto node = make_node(bc->out, {a.node(), b.node()});
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    auto& out = node->value;
    for_each_broadcast(*bc, av.size(), bv.size(),
                       [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
    if (node->requires_grad) {
        node->backward = [bc, da, db](detail::Node& self) {
            auto& an = *self.inputs[0];
            auto& bn = *self.inputs[1];
            const auto& g = self.grad;
            if (an.requires_grad) {
                auto& ga = an.grad_buffer();
                for_each_broadcast(*bc, an.value.size(), bn.value.size(),
                                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                       ga[ia] += g[i] * da(an.value[ia], bn.value[ib]);
                                   });
            }
            if (bn.requires_grad) {
                auto& gb = bn.grad_buffer();
                for_each_broadcast(*bc, an.value.size(), bn.value.size(),
                                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                       gb[ib] += g[i] * db(an.value[ia], bn.value[ib]);
                                   });
            }
        };
    }
    return Tensor(node);
}

// out = f(x); backward multiplies by dfdx(x, out).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
    require(x, op);
    auto node = make_node(x.shape(), {x.node()});
    const auto& xv = x.node()->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        node->value[i] = fwd(xv[i]);
    }
    if (node->requires_grad) {
        node->backward = [deriv](detail::Node& self) {
            auto& in = *self.inputs[0];
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
            }
        };
    }
    return Tensor(node);
}

struct MatmulGeometry {
    std::size_t batch = 1;
    std::size_t a_rows = 0, a_cols = 0, a_stride = 0;
    std::size_t b_rows = 0, b_cols = 0, b_stride = 0;
    std::size_t m = 0, n = 0;
    Shape out;
};

MatmulGeometry matmul_geometry(const Shape& as, const Shape& bs, bool ta, bool tb) {
    auto fail = [&](const std::string& why) {
        return ShapeError("matmul: " + why + " for shapes " + to_string(as) + (ta ? "^T" : "") + " and " +
                          to_string(bs) + (tb ? "^T" : ""));
    };
    if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3) {
        throw fail("operands must have rank 2 or 3");
    }
    const std::size_t ba = as.size() == 3 ? as[0] : 1;
    const std::size_t bb = bs.size() == 3 ? bs[0] : 1;
    if (as.size() == 3 && bs.size() == 3 && ba != bb) {
        throw fail("batch sizes differ");
    }
    MatmulGeometry g;
    g.a_rows = as[as.size() - 2];
    g.a_cols = as[as.size() - 1];
    g.b_rows = bs[bs.size() - 2];
    g.b_cols = bs[bs.size() - 1];
    const std::size_t k_a = ta ? g.a_rows : g.a_cols;
    const std::size_t k_b = tb ? g.b_cols : g.b_rows;
    if (k_a != k_b) {
        throw fail("inner dimensions " + std::to_string(k_a) + " and " + std::to_string(k_b) + " differ");
    }
    g.m = ta ? g.a_cols : g.a_rows;
    g.n = tb ? g.b_rows : g.b_cols;
    g.batch = std::max(ba, bb);
    g.out = as.size() == 3 || bs.size() == 3 ? Shape{g.batch, g.m, g.n} : Shape{g.m, g.n};
    g.a_stride = as.size() == 3 ? g.a_rows * g.a_cols : 0;
    g.b_stride = bs.size() == 3 ? g.b_rows * g.b_cols : 0;
    // A batch of row blocks times a shared right operand is one tall product.
    if (as.size() == 3 && bs.size() == 2 && !ta) {
        g.a_rows *= g.batch;
        g.m = g.a_rows;
        g.batch = 1;
        g.a_stride = 0;
    }
    return g;
}

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) {
        grad.assign(value.size(), 0.0);
    }
    return grad;
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> values(fast::numel(shape), value);
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
        }
    }
    if (fast::numel(shape) != values.size()) {
        throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(fast::numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
    }
    return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) {
        throw ShapeError("index rank mismatch for " + to_string(shape()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape()[axis]) {
            throw ShapeError("index out of range for " + to_string(shape()));
        }
        flat = flat * shape()[axis] + i;
        ++axis;
    }
    return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
    require(*this, "backward");
    if (numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + to_string(shape()));
    }
    if (node_->consumed) {
        throw ContractError("backward() already ran on this graph");
    }
    if (!node_->requires_grad) {
        throw ContractError("backward(): loss does not depend on any tensor requiring grad");
    }

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
    for (detail::Node* n : order) {
        if (n->backward) {
            n->backward = nullptr;
            n->inputs.clear();
            n->grad.clear();
            n->grad.shrink_to_fit();
            n->consumed = true;
        }
    }
}

// --- guards and probes --------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }

NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

AllocationProbe::AllocationProbe() : parent_(g_probe) { g_probe = this; }

AllocationProbe::~AllocationProbe() { g_probe = parent_; }

void AllocationProbe::record(const Shape& shape, std::size_t elements) {
    for (AllocationProbe* p = g_probe; p != nullptr; p = p->parent_) {
        p->total_ += elements;
        ++p->count_;
        if (elements > p->peak_) {
            p->peak_ = elements;
            p->largest_ = shape;
        }
    }
}

// --- operators ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    require(a, "matmul");
    require(b, "matmul");
    auto geo = std::make_shared<MatmulGeometry>(matmul_geometry(a.shape(), b.shape(), transpose_a, transpose_b));
    auto node = make_node(geo->out, {a.node(), b.node()});
    const std::size_t c_stride = geo->m * geo->n;
    const double* av = a.node()->value.data();
    const double* bv = b.node()->value.data();
    for (std::size_t i = 0; i < geo->batch; ++i) {
        gemm(av + i * geo->a_stride, geo->a_rows, geo->a_cols, transpose_a, bv + i * geo->b_stride, geo->b_rows,
             geo->b_cols, transpose_b, node->value.data() + i * c_stride, false);
    }
    if (node->requires_grad) {
        node->backward = [geo, ta = transpose_a, tb = transpose_b](detail::Node& self) {
            auto& an = *self.inputs[0];
            auto& bn = *self.inputs[1];
            const auto& g = *geo;
            const std::size_t cs = g.m * g.n;
            for (std::size_t i = 0; i < g.batch; ++i) {
                const double* dc = self.grad.data() + i * cs;
                const double* ai = an.value.data() + i * g.a_stride;
                const double* bi = bn.value.data() + i * g.b_stride;
                if (an.requires_grad) {
                    double* da = an.grad_buffer().data() + i * g.a_stride;
                    if (!ta) {
                        gemm(dc, g.m, g.n, false, bi, g.b_rows, g.b_cols, !tb, da, true);
                    } else {
                        gemm(bi, g.b_rows, g.b_cols, tb, dc, g.m, g.n, true, da, true);
                    }
                }
                if (bn.requires_grad) {
                    double* db = bn.grad_buffer().data() + i * g.b_stride;
                    if (!tb) {
                        gemm(ai, g.a_rows, g.a_cols, !ta, dc, g.m, g.n, false, db, true);
                    } else {
                        gemm(dc, g.m, g.n, true, ai, g.a_rows, g.a_cols, ta, db, true);
                    }
                }
            }
        };
    }
    return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(
        x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
    return unary(
        x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor huber(const Tensor& residual, double delta) {
    if (!(delta > 0)) {
        throw ContractError("huber: delta must be positive");
    }
    return unary(
        residual, "huber",
        [delta](double r) {
            const double a = std::abs(r);
            return a <= delta ? 0.5 * r * r : delta * a - 0.5 * delta * delta;
        },
        [delta](double r, double) {
            if (std::abs(r) <= delta) {
                return r;
            }
            return r > 0 ? delta : -delta;
        });
}

Tensor softmax_rows(const Tensor& x) {
    require(x, "softmax_rows");
    if (x.rank() == 0) {
        throw ShapeError("softmax_rows: rank-0 input");
    }
    auto node = make_node(x.shape(), {x.node()});
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.numel() / cols;
    const auto& xv = x.node()->value;
    auto& y = node->value;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * cols;
        double* out = y.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double total = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] = std::exp(in[c] - mx);
            total += out[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] /= total;
        }
    }
    if (node->requires_grad) {
        node->backward = [rows, cols](detail::Node& self) {
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* yr = self.value.data() + r * cols;
                const double* dy = self.grad.data() + r * cols;
                double dot = 0;
                for (std::size_t c = 0; c < cols; ++c) {
                    dot += dy[c] * yr[c];
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    g[r * cols + c] += yr[c] * (dy[c] - dot);
                }
            }
        };
    }
    return Tensor(node);
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
    require(x, "rmsnorm");
    require(gain, "rmsnorm");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d) {
        throw ShapeError("rmsnorm: gain " + to_string(gain.shape()) + " does not match last axis of " +
                         to_string(x.shape()));
    }
    auto node = make_node(x.shape(), {x.node(), gain.node()});
    const std::size_t rows = x.numel() / d;
    auto inv_rms = std::make_shared<std::vector<double>>(rows);
    const auto& xv = x.node()->value;
    const auto& gv = gain.node()->value;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double ss = 0;
        for (std::size_t c = 0; c < d; ++c) {
            ss += in[c] * in[c];
        }
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        (*inv_rms)[r] = inv;
        for (std::size_t c = 0; c < d; ++c) {
            node->value[r * d + c] = gv[c] * in[c] * inv;
        }
    }
    if (node->requires_grad) {
        node->backward = [rows, d, inv_rms](detail::Node& self) {
            auto& xn = *self.inputs[0];
            auto& gn = *self.inputs[1];
            for (std::size_t r = 0; r < rows; ++r) {
                const double* in = xn.value.data() + r * d;
                const double* dy = self.grad.data() + r * d;
                const double inv = (*inv_rms)[r];
                if (gn.requires_grad) {
                    auto& gg = gn.grad_buffer();
                    for (std::size_t c = 0; c < d; ++c) {
                        gg[c] += dy[c] * in[c] * inv;
                    }
                }
                if (xn.requires_grad) {
                    double dot = 0;
                    for (std::size_t c = 0; c < d; ++c) {
                        dot += gn.value[c] * dy[c] * in[c];
                    }
                    const double k = dot * inv * inv * inv / static_cast<double>(d);
                    auto& gx = xn.grad_buffer();
                    for (std::size_t c = 0; c < d; ++c) {
                        gx[r * d + c] += gn.value[c] * dy[c] * inv - in[c] * k;
                    }
                }
            }
        };
    }
    return Tensor(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(x, "reshape");
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
    }
    auto node = make_node(std::move(shape), {x.node()});
    node->value = x.node()->value;
    if (node->requires_grad) {
        node->backward = [](detail::Node& self) { accumulate(*self.inputs[0], self.grad); };
    }
    return Tensor(node);
}

std::pair<Tensor, Tensor> split_last(const Tensor& x) {
    require(x, "split_last");
    const std::size_t d = x.shape().back();
    if (d % 2 != 0) {
        throw ShapeError("split_last: odd last dimension in " + to_string(x.shape()));
    }
    const std::size_t half = d / 2;
    const std::size_t rows = x.numel() / d;
    Shape hs = x.shape();
    hs.back() = half;
    auto make_half = [&](std::size_t offset) {
        auto node = make_node(hs, {x.node()});
        const auto& xv = x.node()->value;
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * d + offset), half,
                        node->value.begin() + static_cast<std::ptrdiff_t>(r * half));
        }
        if (node->requires_grad) {
            node->backward = [rows, d, half, offset](detail::Node& self) {
                auto& g = self.inputs[0]->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < half; ++c) {
                        g[r * d + offset + c] += self.grad[r * half + c];
                    }
                }
            };
        }
        return Tensor(node);
    };
    return {make_half(0), make_half(half)};
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_last: no inputs");
    }
    Shape lead = parts[0].shape();
    lead.pop_back();
    std::vector<std::size_t> widths;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require(p, "concat_last");
        Shape ps = p.shape();
        widths.push_back(ps.back());
        total += ps.back();
        ps.pop_back();
        if (ps != lead) {
            throw ShapeError("concat_last: leading axes differ between " + to_string(parts[0].shape()) + " and " +
                             to_string(p.shape()));
        }
        inputs.push_back(p.node());
    }
    Shape out = lead;
    out.push_back(total);
    const std::size_t rows = numel(lead);
    auto node = make_node(out, inputs);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].node()->value;
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                        node->value.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        }
        offset += widths[k];
    }
    if (node->requires_grad) {
        node->backward = [rows, total, widths](detail::Node& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < widths.size(); ++k) {
                auto& in = *self.inputs[k];
                if (in.requires_grad) {
                    auto& g = in.grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < widths[k]; ++c) {
                            g[r * widths[k] + c] += self.grad[r * total + off + c];
                        }
                    }
                }
                off += widths[k];
            }
        };
    }
    return Tensor(node);
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
    require(table, "gather_rows");
    if (table.rank() != 2) {
        throw ShapeError("gather_rows: table must be rank 2, got " + to_string(table.shape()));
    }
    if (indices.empty()) {
        throw ShapeError("gather_rows: no indices");
    }
    const std::size_t rows = table.dim(0), d = table.dim(1);
    for (auto i : indices) {
        if (i >= rows) {
            throw ContractError("gather_rows: index " + std::to_string(i) + " out of range for table with " +
                                std::to_string(rows) + " rows");
        }
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
    auto node = make_node({idx->size(), d}, {table.node()});
    const auto& tv = table.node()->value;
    for (std::size_t k = 0; k < idx->size(); ++k) {
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>((*idx)[k] * d), d,
                    node->value.begin() + static_cast<std::ptrdiff_t>(k * d));
    }
    if (node->requires_grad) {
        node->backward = [idx, d](detail::Node& self) {
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t k = 0; k < idx->size(); ++k) {
                for (std::size_t c = 0; c < d; ++c) {
                    g[(*idx)[k] * d + c] += self.grad[k * d + c];
                }
            }
        };
    }
    return Tensor(node);
}

Tensor sum(const Tensor& x) {
    require(x, "sum");
    auto node = make_node({1}, {x.node()});
    const auto& xv = x.node()->value;
    node->value[0] = std::accumulate(xv.begin(), xv.end(), 0.0);
    if (node->requires_grad) {
        node->backward = [](detail::Node& self) {
            auto& g = self.inputs[0]->grad_buffer();
            for (auto& v : g) {
                v += self.grad[0];
            }
        };
    }
    return Tensor(node);
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fast

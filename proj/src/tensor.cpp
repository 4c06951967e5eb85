#include "vqar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "vqar/errors.hpp"

namespace vqar {

namespace {

thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;
using BackwardFn = std::function<void(detail::Node&)>;

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("non-finite value produced by '") + op + "'");
        }
    }
}

// Builds the output tensor; records the node on the graph only when recording
// is enabled and some input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
    check_finite(op, values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = op;
    bool record = false;
    if (t_grad_enabled) {
        for (const Tensor* t : inputs) record = record || t->requires_grad();
    }
    if (record) {
        node->requires_grad = true;
        for (const Tensor* t : inputs) node->parents.push_back(t->node());
        node->backward = std::move(fn);
    }
    return Tensor::from_node(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   const std::vector<Tensor>& inputs, BackwardFn fn) {
    check_finite(op, values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = op;
    bool record = false;
    if (t_grad_enabled) {
        for (const Tensor& t : inputs) record = record || t.requires_grad();
    }
    if (record) {
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->parents.push_back(t.node());
        node->backward = std::move(fn);
    }
    return Tensor::from_node(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank2(const Tensor& t, const char* op) {
    require_defined(t, op);
    if (t.rank() != 2) {
        throw ContractError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
    }
}

enum class Broadcast { Same, Rows };

Broadcast binary_layout(const Tensor& a, const Tensor& b, const char* op) {
    require_defined(a, op);
    require_defined(b, op);
    if (a.shape() == b.shape()) return Broadcast::Same;
    if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1]) return Broadcast::Rows;
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

// Gradient of a broadcast operand: sum over rows.
std::vector<double> reduce_rows(std::span<const double> g, std::size_t rows, std::size_t cols) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = g.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
    }
    return out;
}

template <typename Forward, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Forward f, Deriv df) {
    require_defined(x, op);
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    // df(input, output) -> local derivative
    return make_result(x.shape(), std::move(out), op, {&x}, [df](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        std::vector<double> g(self.value.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * df(p->value[i], self.value[i]);
        p->accumulate(g);
    });
}

double stable_softplus(double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// C[m,n] = A[m,k] B[k,n]; k ascends in a fixed order for every output element
// so each row of C depends only on the matching row of A.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] B[k,n]^T
// B is transposed once so the inner loop runs over contiguous memory; each
// dot product still sums j = 0..n-1 in order before touching dA.
void gemm_nt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
    std::vector<double> bt(n * k);
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    }
    std::vector<double> acc(k);
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = dc + i * n;
        double* arow = da + i * k;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double g = grow[j];
            const double* btrow = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) acc[p] += g * btrow[p];
        }
        for (std::size_t p = 0; p < k; ++p) arow[p] += acc[p];
    }
}

// dB[k,n] += A[m,k]^T dC[m,n]
void gemm_tn_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* brow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// --- Node ------------------------------------------------------------------

void detail::Node::accumulate(std::span<const double> g) {
    if (grad.empty()) {
        grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

std::span<double> detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.size() > 2) throw ContractError("tensors are limited to rank 2, got " + shape_str(shape));
    if (shape_size(shape) != values.size()) {
        throw ContractError("data length " + std::to_string(values.size()) + " does not match shape " +
                            shape_str(shape));
    }
    check_finite("from", values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return from({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("shape of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape().back(); }

std::span<const double> Tensor::data() const {
    if (!node_) throw ContractError("data of undefined tensor");
    return node_->value;
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t i) const { return data()[i]; }

double Tensor::at(std::size_t row, std::size_t col) const { return data()[row * cols() + col]; }

std::span<double> Tensor::mutable_data() {
    if (!node_ || !node_->is_leaf()) throw ContractError("mutable_data() is only allowed on leaf tensors");
    return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach");
    return from(node_->shape, node_->value, false);
}

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
    require_defined(*this, "backward");
    if (size() != 1) throw ContractError("backward() requires a scalar root, got " + shape_str(shape()));
    if (node_->consumed) throw ContractError("backward() called twice on the same graph");
    if (!node_->requires_grad || node_->is_leaf()) {
        throw ContractError("backward() root was not produced by recorded operations");
    }

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->is_leaf()) {
            n->grad_buffer();  // reachable leaves always end with a populated grad
            continue;
        }
        if (n->grad.empty()) continue;
        n->backward(*n);
    }

    // Release the graph: interior nodes drop inputs, closures and gradients.
    for (detail::Node* n : order) {
        if (n->is_leaf()) continue;
        n->parents.clear();
        n->backward = nullptr;
        if (n != node_.get()) n->grad.clear();
    }
    node_->consumed = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ContractError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), "matmul", {&a, &b}, [m, k, n](detail::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) gemm_nt_acc(self.grad.data(), pb->value.data(), pa->grad_buffer().data(), m, k, n);
        if (pb->requires_grad) gemm_tn_acc(pa->value.data(), self.grad.data(), pb->grad_buffer().data(), m, k, n);
    });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank2(x, "affine");
    require_rank2(w, "affine");
    require_defined(bias, "affine");
    const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
    if (w.shape()[0] != k || bias.shape() != Shape{n}) {
        throw ContractError("affine: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()) +
                            " + " + shape_str(bias.shape()));
    }
    std::vector<double> out(m * n);
    gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    }
    return make_result({m, n}, std::move(out), "affine", {&x, &w, &bias}, [m, k, n](detail::Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad) gemm_nt_acc(self.grad.data(), pw->value.data(), px->grad_buffer().data(), m, k, n);
        if (pw->requires_grad) gemm_tn_acc(px->value.data(), self.grad.data(), pw->grad_buffer().data(), m, k, n);
        if (pb->requires_grad) pb->accumulate(reduce_rows(self.grad, m, n));
    });
}

// --- elementwise binary ----------------------------------------------------

namespace {

// da(a, b) and db(a, b) are the local partial derivatives.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da, DB db) {
    const Broadcast layout = binary_layout(a, b, op);
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t cols = b.size();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = f(av[i], bv[layout == Broadcast::Same ? i : i % cols]);
    }
    return make_result(a.shape(), std::move(out), op, {&a, &b}, [layout, cols, da, db](detail::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const std::size_t n = self.value.size();
        if (pa->requires_grad) {
            std::vector<double> g(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double bi = pb->value[layout == Broadcast::Same ? i : i % cols];
                g[i] = self.grad[i] * da(pa->value[i], bi);
            }
            pa->accumulate(g);
        }
        if (pb->requires_grad) {
            std::vector<double> g(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double bi = pb->value[layout == Broadcast::Same ? i : i % cols];
                g[i] = self.grad[i] * db(pa->value[i], bi);
            }
            if (layout == Broadcast::Rows) {
                pb->accumulate(reduce_rows(g, n / cols, cols));
            } else {
                pb->accumulate(g);
            }
        }
    });
}

}  // namespace

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

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// --- elementwise unary -----------------------------------------------------

Tensor neg(const Tensor& x) {
    return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double c) {
    return unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary(x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor reciprocal(const Tensor& x) {
    return unary(x, "reciprocal", [](double v) { return 1.0 / v; }, [](double, double y) { return -y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
    return unary(x, "softplus", stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Tensor log(const Tensor& x) {
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
    return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor lgamma(const Tensor& x) {
    require_defined(x, "lgamma");
    for (double v : x.data()) {
        if (!(v > 0.0)) throw ContractError("lgamma: domain error, non-positive argument " + std::to_string(v));
    }
    return unary(x, "lgamma", [](double v) { return std::lgamma(v); }, [](double v, double) { return digamma(v); });
}

Tensor square(const Tensor& x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result({}, {total}, "sum", {&x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (p->requires_grad) p->accumulate(std::vector<double>(p->value.size(), self.grad[0]));
    });
}

Tensor mean(const Tensor& x) {
    require_defined(x, "mean");
    const double n = static_cast<double>(x.size());
    if (x.size() == 0) throw ContractError("mean of empty tensor");
    return scale(sum(x), 1.0 / n);
}

Tensor row_sum(const Tensor& x) {
    require_rank2(x, "row_sum");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(m, 0.0);
    const auto xv = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
    }
    return make_result({m, 1}, std::move(out), "row_sum", {&x}, [m, n](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        std::vector<double> g(m * n);
        for (std::size_t i = 0; i < m; ++i) std::fill_n(g.begin() + i * n, n, self.grad[i]);
        p->accumulate(g);
    });
}

Tensor l2_norm(const Tensor& x) {
    require_defined(x, "l2_norm");
    double ss = 0.0;
    for (double v : x.data()) ss += v * v;
    const double norm = std::sqrt(ss);
    return make_result({}, {norm}, "l2_norm", {&x}, [norm](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        std::vector<double> g(p->value.size(), 0.0);
        if (norm > 0.0) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[0] * p->value[i] / norm;
        }
        p->accumulate(g);
    });
}

// --- structural ------------------------------------------------------------

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& t : parts) {
        require_rank2(t, "concat_cols");
        if (t.rows() != m) {
            throw ContractError("concat_cols: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                                shape_str(t.shape()));
        }
        widths.push_back(t.cols());
        total += t.cols();
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto v = parts[p].data();
        const std::size_t w = widths[p];
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(v.begin() + i * w, w, out.begin() + i * total + offset);
        }
        offset += w;
    }
    return make_result({m, total}, std::move(out), "concat_cols", parts, [m, total, widths](detail::Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            auto& parent = self.parents[p];
            const std::size_t w = widths[p];
            if (parent->requires_grad) {
                auto buf = parent->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) buf[i * w + j] += self.grad[i * total + offset + j];
                }
            }
            offset += w;
        }
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank2(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin > end || end > n) {
        throw ContractError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of bounds for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    const auto v = x.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(v.begin() + i * n + begin, w, out.begin() + i * w);
    return make_result({m, w}, std::move(out), "slice_cols", {&x}, [m, n, w, begin](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto buf = p->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) buf[i * n + begin + j] += self.grad[i * w + j];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require_defined(x, "reshape");
    if (shape.size() > 2 || shape_size(shape) != x.size()) {
        throw ContractError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), "reshape", {&x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (p->requires_grad) p->accumulate(self.grad);
    });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
    require_rank2(table, "gather_rows");
    const std::size_t rows = table.shape()[0], n = table.shape()[1];
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<double> out(idx.size() * n);
    const auto v = table.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= rows) {
            throw ContractError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                                shape_str(table.shape()));
        }
        std::copy_n(v.begin() + idx[i] * n, n, out.begin() + i * n);
    }
    const std::size_t m = idx.size();
    return make_result({m, n}, std::move(out), "gather_rows", {&table}, [idx, n](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto buf = p->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) buf[idx[i] * n + j] += self.grad[i * n + j];
        }
    });
}

// --- gradient routing ------------------------------------------------------

Tensor stop_gradient(const Tensor& x) {
    require_defined(x, "stop_gradient");
    std::vector<double> out(x.data().begin(), x.data().end());
    // Recorded so that x is still reached (and ends with a zero gradient), but
    // nothing flows back through it.
    return make_result(x.shape(), std::move(out), "stop_gradient", {&x}, [](detail::Node&) {});
}

Tensor straight_through(const Tensor& encoded, const Tensor& quantized) {
    require_defined(encoded, "straight_through");
    require_defined(quantized, "straight_through");
    if (encoded.shape() != quantized.shape()) {
        throw ContractError("straight_through: shape mismatch " + shape_str(encoded.shape()) + " vs " +
                            shape_str(quantized.shape()));
    }
    std::vector<double> out(quantized.data().begin(), quantized.data().end());
    // `quantized` sits behind the stop-gradient and receives nothing through
    // this path.
    return make_result(encoded.shape(), std::move(out), "straight_through", {&encoded, &quantized},
                       [](detail::Node& self) {
        auto& p = self.parents[0];
        if (p->requires_grad) p->accumulate(self.grad);
    });
}

double digamma(double x) {
    if (!(x > 0.0)) throw ContractError("digamma: domain error, non-positive argument");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Asymptotic expansion with Bernoulli-number coefficients.
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    return result;
}

}  // namespace vqar

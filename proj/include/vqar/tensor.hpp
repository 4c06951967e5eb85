#pragma once

// Dense float64 tensors with a dynamic reverse-mode autodiff graph.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record a node holding the forward value, references to
// the inputs and a closure that pushes the output gradient back to the
// inputs. `backward()` on a scalar root walks the recorded graph once in
// reverse topological order and then releases it.
//
// Shapes are rank 0 (scalar), rank 1 or rank 2. Elementwise binary ops accept
// identical shapes, or a rank-1 right operand broadcast over the rows of a
// rank-2 left operand. Nothing else broadcasts.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vqar {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    bool consumed = false;  // set on a root once backward has run
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return parents.empty() && !backward; }
    void accumulate(std::span<const double> g);
    std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    // Row count of a rank-2 tensor; 1 for lower ranks.
    std::size_t rows() const;
    // Trailing dimension; 1 for scalars.
    std::size_t cols() const;

    std::span<const double> data() const;
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const;

    // In-place access for leaf tensors only (parameters, optimizer updates).
    std::span<double> mutable_data();

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    // Reverse sweep from this scalar. Gradients accumulate into leaves.
    void backward() const;

    // New leaf holding a copy of the value, detached from any graph.
    Tensor detach() const;

    const char* op_name() const;
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// --- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// x[B,k] * w[k,n] + bias[n]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);

// --- elementwise binary ----------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// --- elementwise unary -----------------------------------------------------
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor reciprocal(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor lgamma(const Tensor& x);
Tensor square(const Tensor& x);

// --- reductions ------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [B,n] -> [B,1]
Tensor row_sum(const Tensor& x);
Tensor l2_norm(const Tensor& x);

// --- structural ------------------------------------------------------------
// Concatenate rank-2 tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Same data, new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape);
// Rows of a rank-2 table selected by index; result [indices.size(), cols].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// --- gradient routing ------------------------------------------------------
// Forward identity, backward annihilator.
Tensor stop_gradient(const Tensor& x);
// Forward value of `quantized`, gradient copied verbatim to `encoded`:
// encoded + stop_gradient(quantized - encoded).
Tensor straight_through(const Tensor& encoded, const Tensor& quantized);

double digamma(double x);

}  // namespace vqar

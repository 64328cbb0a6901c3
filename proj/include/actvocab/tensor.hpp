#pragma once

// Reverse-mode automatic differentiation over small dense f64 arrays.
//
// A Tensor is a cheap handle onto a graph node. Leaves are created with
// Tensor::constant or Tensor::parameter; every op below returns a new node
// that remembers its parents and how to push gradients back into them.
// backward() runs once per recorded graph: a second call on the same output
// throws, and leaf gradients are overwritten (never accumulated) by each run.
//
// Supported primitives are the ones small perceptrons need: matmul,
// row-broadcast add/sub/mul, elementwise tanh/relu/exp/log, softmax and
// log-softmax over the last axis, sum/mean, column concatenation, row
// gathering, and a straight-through pass used for the hard-selection
// ablation.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace actvocab::grad {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

struct Node;

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> data);
    static Tensor parameter(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t rows() const;  // leading extent; 1 for vectors
    std::size_t cols() const;  // trailing extent

    std::span<const double> data() const;
    /// Mutable access for leaves only (initialization and optimizer updates).
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    /// Only valid on leaves; used to freeze or unfreeze parameters.
    void set_requires_grad(bool value);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void clear_grad();

    const Node* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;

    friend struct OpAccess;
};

/// Disables graph recording on this thread while alive. Results of ops are
/// plain constants; useful for inference over shared parameters.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or b a row vector ([n] or [1,n]) broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [m,p] ++ [m,q] -> [m,p+q]
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Rows of a at the given indices (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
/// Forward value is `forward_value`; the gradient passes to `carrier` unchanged.
Tensor straight_through(const Tensor& carrier, std::vector<double> forward_value);

/// Populates grad on every requires_grad leaf reachable from `output`.
/// Throws ShapeError for non-scalar outputs and GraphError when the graph
/// was already consumed by an earlier call.
void backward(const Tensor& output);

}  // namespace actvocab::grad

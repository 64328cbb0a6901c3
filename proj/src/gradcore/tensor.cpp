#include "actvocab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_set>

#include "actvocab/kernels.hpp"

namespace actvocab::grad {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

struct OpAccess {
    static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
    static const std::shared_ptr<Node>& ptr(const Tensor& t) { return t.node_; }
};

namespace {

thread_local bool g_grad_mode = true;

const Node& checked(const Tensor& t) {
    if (!t.defined()) throw GraphError("operation on an undefined tensor");
    return *t.node();
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Gradient buffer of a parent, allocated lazily during backward.
std::vector<double>& grad_of(Node& n) {
    if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
    return n.grad;
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->leaf = false;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs && g_grad_mode) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->parents.push_back(OpAccess::ptr(in));
        node->backward_fn = std::move(backward_fn);
    }
    return OpAccess::wrap(std::move(node));
}

bool is_row_vector_for(const Tensor& row, const Tensor& full) {
    const auto& rs = row.shape();
    const std::size_t n = full.cols();
    if (full.shape().size() != 2) return false;
    return (rs.size() == 1 && rs[0] == n) || (rs.size() == 2 && rs[0] == 1 && rs[1] == n);
}

enum class Broadcast { same, row };

Broadcast binary_layout(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (is_row_vector_for(b, a)) return Broadcast::row;
    throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
}

template <typename F, typename D>
Tensor unary(const Tensor& a, F forward, D derivative) {
    const auto& in = checked(a).data;
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
    return make_result(a.shape(), std::move(out), {a}, [derivative](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = grad_of(p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * derivative(p.data[i], self.data[i]);
    });
}

}  // namespace

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor shape " + to_string(shape) + " has a zero extent");
    if (grad::numel(shape) != data.size())
        throw ShapeError("tensor shape " + to_string(shape) + " needs " + std::to_string(grad::numel(shape)) +
                         " values, got " + std::to_string(data.size()));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    Tensor t = constant(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = grad::numel(shape);
    Tensor t = constant(std::move(shape), std::vector<double>(n, 0.0));
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

const Shape& Tensor::shape() const { return checked(*this).shape; }
std::size_t Tensor::numel() const { return checked(*this).data.size(); }
std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 1 ? 1 : grad::numel(Shape(s.begin(), s.end() - 1));
}
std::size_t Tensor::cols() const { return shape().back(); }

std::span<const double> Tensor::data() const { return checked(*this).data; }

std::span<double> Tensor::mutable_data() {
    checked(*this);
    if (!node_->leaf) throw GraphError("mutable_data() is only available on leaf tensors");
    return node_->data;
}

double Tensor::item() const {
    const auto& n = checked(*this);
    if (n.data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(n.shape));
    return n.data[0];
}

bool Tensor::requires_grad() const { return checked(*this).requires_grad; }

void Tensor::set_requires_grad(bool value) {
    checked(*this);
    if (!node_->leaf) throw GraphError("set_requires_grad() is only available on leaf tensors");
    node_->requires_grad = value;
    if (!value) node_->grad.clear();
}

bool Tensor::is_leaf() const { return checked(*this).leaf; }

bool Tensor::has_grad() const {
    const auto& n = checked(*this);
    return !n.grad.empty() && n.grad.size() == n.data.size();
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw GraphError("tensor of shape " + to_string(shape()) + " has no gradient");
    return node_->grad;
}

void Tensor::clear_grad() {
    checked(*this);
    node_->grad.clear();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }
bool grad_mode_enabled() { return g_grad_mode; }

Tensor matmul(const Tensor& a, const Tensor& b) {
    checked(a);
    checked(b);
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul expects 2-d operands, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    std::vector<double> out(m * n);
    simd::gemm(m, n, k, a.data().data(), b.data().data(), out.data(), false);
    return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            std::vector<double> bt(n * k);
            simd::transpose(k, n, pb.data.data(), bt.data());
            simd::gemm(m, k, n, self.grad.data(), bt.data(), grad_of(pa).data(), true);
        }
        if (pb.requires_grad) {
            std::vector<double> at(k * m);
            simd::transpose(m, k, pa.data.data(), at.data());
            simd::gemm(k, n, m, at.data(), self.grad.data(), grad_of(pb).data(), true);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const Broadcast layout = binary_layout("add", a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    const std::size_t rows = a.rows(), cols = a.cols();
    if (layout == Broadcast::same) {
        simd::axpy(1.0, b.data(), out);
    } else {
        simd::add_row_broadcast(rows, cols, b.data().data(), out.data());
    }
    return make_result(a.shape(), std::move(out), {a, b}, [layout, rows, cols](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) simd::axpy(1.0, self.grad, grad_of(pa));
        if (pb.requires_grad) {
            if (layout == Broadcast::same)
                simd::axpy(1.0, self.grad, grad_of(pb));
            else
                simd::sum_rows(rows, cols, self.grad.data(), grad_of(pb).data());
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Broadcast layout = binary_layout("sub", a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto bd = b.data();
    if (layout == Broadcast::same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    } else {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] -= bd[j];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [layout, rows, cols](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) simd::axpy(1.0, self.grad, grad_of(pa));
        if (pb.requires_grad) {
            auto& g = grad_of(pb);
            if (layout == Broadcast::same) {
                simd::axpy(-1.0, self.grad, g);
            } else {
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) g[j] -= self.grad[i * cols + j];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Broadcast layout = binary_layout("mul", a, b);
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out[i * cols + j] = ad[i * cols + j] * (layout == Broadcast::same ? bd[i * cols + j] : bd[j]);
    return make_result(a.shape(), std::move(out), {a, b}, [layout, rows, cols](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const bool same = layout == Broadcast::same;
        if (pa.requires_grad) {
            auto& g = grad_of(pa);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    g[i * cols + j] += self.grad[i * cols + j] * (same ? pb.data[i * cols + j] : pb.data[j]);
        }
        if (pb.requires_grad) {
            auto& g = grad_of(pb);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    g[same ? i * cols + j : j] += self.grad[i * cols + j] * pa.data[i * cols + j];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double x : checked(a).data)
        if (!(x > 0.0)) throw std::domain_error("log of a non-positive value");
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softmax(const Tensor& a) {
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = in.data() + i * cols;
        double* y = out.data() + i * cols;
        const double mx = *std::max_element(x, x + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
    }
    return make_result(a.shape(), std::move(out), {a}, [rows, cols](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = grad_of(p);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* y = self.data.data() + i * cols;
            const double* dy = self.grad.data() + i * cols;
            double inner = 0.0;
            for (std::size_t j = 0; j < cols; ++j) inner += dy[j] * y[j];
            for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += y[j] * (dy[j] - inner);
        }
    });
}

Tensor log_softmax(const Tensor& a) {
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = in.data() + i * cols;
        const double mx = *std::max_element(x, x + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += std::exp(x[j] - mx);
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[j] - lse;
    }
    return make_result(a.shape(), std::move(out), {a}, [rows, cols](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = grad_of(p);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* y = self.data.data() + i * cols;
            const double* dy = self.grad.data() + i * cols;
            double total = 0.0;
            for (std::size_t j = 0; j < cols; ++j) total += dy[j];
            for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += dy[j] - std::exp(y[j]) * total;
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double x : a.data()) total += x;
    return make_result({1}, {total}, {a}, [](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = grad_of(p);
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.rows() != b.rows())
        throw ShapeError("concat_cols: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
    const std::size_t rows = a.rows(), pa_cols = a.cols(), pb_cols = b.cols(), cols = pa_cols + pb_cols;
    std::vector<double> out(rows * cols);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(ad.data() + i * pa_cols, pa_cols, out.data() + i * cols);
        std::copy_n(bd.data() + i * pb_cols, pb_cols, out.data() + i * cols + pa_cols);
    }
    return make_result({rows, cols}, std::move(out), {a, b}, [rows, pa_cols, pb_cols, cols](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = grad_of(pa);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < pa_cols; ++j) g[i * pa_cols + j] += self.grad[i * cols + j];
        }
        if (pb.requires_grad) {
            auto& g = grad_of(pb);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < pb_cols; ++j) g[i * pb_cols + j] += self.grad[i * cols + pa_cols + j];
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
    if (a.shape().size() != 2) throw ShapeError("gather_rows expects a 2-d tensor, got " + to_string(a.shape()));
    if (indices.empty()) throw ShapeError("gather_rows with no indices");
    const std::size_t rows = a.rows(), cols = a.cols();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::vector<double> out(idx.size() * cols);
    const auto ad = a.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= rows)
            throw ShapeError("gather_rows index " + std::to_string(idx[r]) + " out of range for " + to_string(a.shape()));
        std::copy_n(ad.data() + idx[r] * cols, cols, out.data() + r * cols);
    }
    const std::size_t count = idx.size();
    return make_result({count, cols}, std::move(out), {a}, [idx = std::move(idx), cols](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = grad_of(p);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < cols; ++j) g[idx[r] * cols + j] += self.grad[r * cols + j];
    });
}

Tensor straight_through(const Tensor& carrier, std::vector<double> forward_value) {
    if (forward_value.size() != carrier.numel())
        throw ShapeError("straight_through value has " + std::to_string(forward_value.size()) +
                         " entries, carrier has shape " + to_string(carrier.shape()));
    return make_result(carrier.shape(), std::move(forward_value), {carrier}, [](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) simd::axpy(1.0, self.grad, grad_of(p));
    });
}

void backward(const Tensor& output) {
    const auto& root = OpAccess::ptr(output);
    if (!root) throw GraphError("backward on an undefined tensor");
    if (root->data.size() != 1) throw ShapeError("backward needs a scalar output, got shape " + to_string(root->shape));
    if (root->consumed) throw GraphError("backward already ran on this graph; run a new forward pass first");
    if (!root->requires_grad) throw GraphError("backward on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad.assign(n->data.size(), 0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->leaf) continue;
        if (n->backward_fn) n->backward_fn(*n);
    }
    // Interior nodes release their closures and parents; leaves keep grads.
    for (Node* n : order) {
        if (n->leaf) continue;
        n->consumed = true;
        n->backward_fn = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

}  // namespace actvocab::grad

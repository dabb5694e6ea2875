#include "lindistill/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lindistill/errors.hpp"

namespace lindistill {

struct Node {
    Shape shape;
    Buffer data;
    Buffer grad;
    bool requires_grad = false;
    std::vector<Tensor> inputs;
    detail::BackwardFn backward;
    std::uint64_t id = 0;

    bool is_leaf() const { return !backward; }
    Buffer& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_node(Shape shape, Buffer data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("value count " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Buffer data(shape_numel(shape), value);
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    detail::check_finite("from_values", values);
    return Tensor(new_node(std::move(shape), Buffer(values.begin(), values.end()), requires_grad));
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape()));
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::values() const { return node_->data; }

std::span<double> Tensor::mutable_values() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!node_->is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.clear(); }

std::uint64_t Tensor::node_id() const { return node_->id; }

Tensor Tensor::detach() const { return Tensor(new_node(shape(), node_->data, false)); }

Tensor Tensor::clone() const { return Tensor(new_node(shape(), node_->data, node_->requires_grad)); }

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].node().get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) n->backward(n->grad);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

void check_finite(const char* name, std::span<const double> data) {
    for (double v : data) {
        if (!std::isfinite(v)) throw NumericFault(std::string(name) + " produced a non-finite value");
    }
}

Tensor make_op(const char* name, Shape shape, Buffer data, std::vector<Tensor> inputs,
               BackwardFn backward) {
    check_finite(name, data);
    const bool track =
        g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor& t) { return t.requires_grad(); });
    auto node = new_node(std::move(shape), std::move(data), track);
    if (track) {
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

std::span<double> grad_sink(const Tensor& t) {
    if (!t.requires_grad()) return {};
    return t.node()->ensure_grad();
}

}  // namespace detail

}  // namespace lindistill

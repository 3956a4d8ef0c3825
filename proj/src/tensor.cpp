#include "colormamba/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace colormamba {

namespace detail {

uint64_t next_tape_id() {
    // Tape recording is confined to one logical thread; a thread-local
    // counter keeps ids dense and ordering deterministic.
    thread_local uint64_t counter = 0;
    return ++counter;
}

}  // namespace detail

static std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<real> data) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->tape_id = detail::next_tape_id();
    return n;
}

Tensor Tensor::zeros(Shape shape) {
    int64_t n = colormamba::numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<real>(static_cast<size_t>(n), real(0))));
}

Tensor Tensor::full(Shape shape, real v) {
    int64_t n = colormamba::numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<real>(static_cast<size_t>(n), v)));
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data) {
    if (colormamba::numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
    check_finite(data, "from_data");
    return Tensor(new_leaf(std::move(shape), std::move(data)));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, real lo, real hi) {
    int64_t n = colormamba::numel(shape);
    std::vector<real> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor(new_leaf(std::move(shape), std::move(data)));
}

Tensor Tensor::normal(Shape shape, Rng& rng, real mean, real stddev) {
    int64_t n = colormamba::numel(shape);
    std::vector<real> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.normal(mean, stddev);
    return Tensor(new_leaf(std::move(shape), std::move(data)));
}

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor");
    return node_->value[0];
}

real Tensor::at(std::initializer_list<int64_t> idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch");
    int64_t flat = 0;
    size_t d = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= s[d]) throw ShapeError("at(): index out of range");
        flat = flat * s[d] + i;
        ++d;
    }
    return node_->value[static_cast<size_t>(flat)];
}

Tensor& Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
}

const std::vector<real>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad accessed before backward populated it");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), real(0));
}

Tensor Tensor::detach() const {
    return Tensor(new_leaf(node_->shape, node_->value));
}

Tensor make_op_result(const char* op, Shape shape, std::vector<real> value,
                      const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> backward) {
    check_finite(value, op);
    auto n = new_leaf(std::move(shape), std::move(value));
    n->op = op;
    bool wants = grad_enabled();
    if (wants) {
        wants = false;
        for (const Tensor& t : inputs) {
            if (t.defined() && t.requires_grad()) {
                wants = true;
                break;
            }
        }
    }
    if (wants) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
        n->backward_fn = std::move(backward);
    }
    return Tensor(n);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a defined scalar loss");
    }
    auto root = loss.node();
    if (!root->requires_grad) {
        throw ContractError("backward() on a tensor with no recorded tape");
    }

    // Collect the reachable subgraph, then replay in descending tape order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->tape_id > b->tape_id; });

    root->ensure_grad();
    root->grad[0] = real(1);
    for (detail::Node* n : order) {
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
    }
}

std::unordered_map<const detail::Node*, std::vector<real>> backward_collect(
    const Tensor& loss, const std::vector<Tensor>& leaves) {
    for (const Tensor& t : leaves) const_cast<Tensor&>(t).zero_grad();
    backward(loss);
    std::unordered_map<const detail::Node*, std::vector<real>> out;
    for (const Tensor& t : leaves) {
        out[t.node().get()] = t.has_grad() ? t.grad() : std::vector<real>(t.numel(), real(0));
    }
    return out;
}

}  // namespace colormamba

#pragma once

#include <functional>
#include <memory>
#include <unordered_map>

#include "colormamba/common.hpp"

namespace colormamba {

class Tensor;

namespace detail {

// One recorded value on the tape. tape_id is the topological order token:
// replaying backward in descending id order visits every node after all of
// its consumers.
struct Node {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;
    bool requires_grad = false;
    uint64_t tape_id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), real(0));
    }
};

uint64_t next_tape_id();

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real v);
    static Tensor from_data(Shape shape, std::vector<real> data);
    static Tensor scalar(real v) { return from_data({1}, {v}); }
    static Tensor uniform(Shape shape, Rng& rng, real lo, real hi);
    static Tensor normal(Shape shape, Rng& rng, real mean, real stddev);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t ndim() const { return node_->shape.size(); }
    int64_t numel() const { return node_->numel(); }

    const std::vector<real>& values() const { return node_->value; }
    // Mutable access for the optimizer / loaders; tensors are otherwise
    // immutable after construction.
    std::vector<real>& raw_values() { return node_->value; }

    real item() const;
    real at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v);

    bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
    const std::vector<real>& grad() const;
    std::vector<real>& raw_grad() { return node_->grad; }
    void zero_grad();

    // New leaf with the same values, cut from the tape.
    Tensor detach() const;

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    friend Tensor make_op_result(const char* op, Shape shape, std::vector<real> value,
                                 const std::vector<Tensor>& inputs,
                                 std::function<void(detail::Node&)> backward);
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// Builds an op node. Records parents and the backward rule only when grad
// mode is on and some input requires grad.
Tensor make_op_result(const char* op, Shape shape, std::vector<real> value,
                      const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> backward);

// Reverse-mode sweep from a scalar loss. Accumulates into each reachable
// requires_grad node's grad buffer (callers zero_grad between steps).
void backward(const Tensor& loss);

// Gradient map form: leaf node pointer -> gradient. Convenience for tests.
std::unordered_map<const detail::Node*, std::vector<real>> backward_collect(
    const Tensor& loss, const std::vector<Tensor>& leaves);

}  // namespace colormamba

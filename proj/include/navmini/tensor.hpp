#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "navmini/error.hpp"

namespace navmini {

using Shape = std::vector<int>;

int shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
	Shape shape;
	std::vector<float> value;
	std::vector<float> grad; // allocated on demand, same length as value
	bool requires_grad = false;
	const char* op = "leaf";
	std::vector<std::shared_ptr<Node>> parents;
	// Propagates this node's grad into the parents' grads.
	std::function<void(Node&)> backward_fn;

	int numel() const { return static_cast<int>(value.size()); }
	void ensure_grad() {
		if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
	}
};

} // namespace detail

// Value-semantics handle to a graph node. Ops build a fresh graph every
// forward pass; leaf nodes (parameters, inputs) persist across passes and
// keep their gradient accumulators until explicitly zeroed.
class Tensor {
public:
	Tensor() = default;

	static Tensor zeros(Shape shape, bool requires_grad = false);
	static Tensor full(Shape shape, float value, bool requires_grad = false);
	static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
	static Tensor scalar(float value);

	bool defined() const { return node_ != nullptr; }
	const Shape& shape() const { return node_->shape; }
	int ndim() const { return static_cast<int>(node_->shape.size()); }
	int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
	int numel() const { return node_->numel(); }
	bool requires_grad() const { return node_->requires_grad; }
	const char* op_name() const { return node_->op; }

	const std::vector<float>& values() const { return node_->value; }
	// Direct mutation is only meaningful for leaves (parameters, inputs).
	std::vector<float>& values_mut() { return node_->value; }

	const std::vector<float>& grad() const;
	std::vector<float>& grad_mut();
	void zero_grad();

	float item() const;

	// Reverse-mode pass from a scalar. Accumulates into every reachable
	// leaf's grad buffer; unreachable leaves are left untouched.
	void backward() const;

	std::shared_ptr<detail::Node> node() const { return node_; }
	explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
	std::shared_ptr<detail::Node> node_;
};

// Scoped guard disabling graph construction (inference / frozen evaluation).
class NoGradGuard {
public:
	NoGradGuard();
	~NoGradGuard();
	NoGradGuard(const NoGradGuard&) = delete;
	NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
	bool prev_;
};

bool grad_enabled();

} // namespace navmini

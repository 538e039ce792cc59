#include "navmini/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace navmini {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

int shape_numel(const Shape& shape) {
	int n = 1;
	for (int d : shape) {
		if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
		n *= d;
	}
	return n;
}

std::string shape_str(const Shape& shape) {
	std::ostringstream os;
	os << "[";
	for (size_t i = 0; i < shape.size(); ++i) {
		if (i) os << ",";
		os << shape[i];
	}
	os << "]";
	return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
	auto n = std::make_shared<detail::Node>();
	n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
	n->shape = std::move(shape);
	n->requires_grad = requires_grad;
	return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
	Tensor t = zeros(std::move(shape), requires_grad);
	std::fill(t.node()->value.begin(), t.node()->value.end(), value);
	return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
	if (static_cast<int>(data.size()) != shape_numel(shape)) {
		throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
	}
	auto n = std::make_shared<detail::Node>();
	n->shape = std::move(shape);
	n->value = std::move(data);
	n->requires_grad = requires_grad;
	return Tensor(std::move(n));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

const std::vector<float>& Tensor::grad() const {
	node_->ensure_grad();
	return node_->grad;
}

std::vector<float>& Tensor::grad_mut() {
	node_->ensure_grad();
	return node_->grad;
}

void Tensor::zero_grad() {
	node_->ensure_grad();
	std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
	if (numel() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
	return node_->value[0];
}

void Tensor::backward() const {
	if (numel() != 1) throw ShapeError("backward on non-scalar tensor of shape " + shape_str(shape()));
	// Topological order by iterative DFS; reverse gives the propagation order.
	std::vector<detail::Node*> order;
	std::unordered_set<detail::Node*> visited;
	struct Frame {
		detail::Node* node;
		size_t next_parent;
	};
	std::vector<Frame> stack;
	if (node_->requires_grad) stack.push_back({node_.get(), 0});
	visited.insert(node_.get());
	while (!stack.empty()) {
		Frame& f = stack.back();
		if (f.next_parent < f.node->parents.size()) {
			detail::Node* p = f.node->parents[f.next_parent++].get();
			if (p->requires_grad && !visited.count(p)) {
				visited.insert(p);
				stack.push_back({p, 0});
			}
		} else {
			order.push_back(f.node);
			stack.pop_back();
		}
	}
	node_->ensure_grad();
	node_->grad[0] += 1.0f;
	for (auto it = order.rbegin(); it != order.rend(); ++it) {
		detail::Node* n = *it;
		if (n->backward_fn) n->backward_fn(*n);
	}
}

} // namespace navmini

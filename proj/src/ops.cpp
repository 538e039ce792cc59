#include "navmini/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <string>

namespace navmini {
namespace ops {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace {

NodePtr make_node(const char* op, Shape shape, std::vector<NodePtr> parents) {
	auto n = std::make_shared<Node>();
	n->op = op;
	n->value.resize(static_cast<size_t>(shape_numel(shape)));
	n->shape = std::move(shape);
	if (grad_enabled()) {
		for (const auto& p : parents) {
			if (p->requires_grad) {
				n->requires_grad = true;
				break;
			}
		}
		if (n->requires_grad) n->parents = std::move(parents);
	}
	return n;
}

void check_finite(const char* op, const Node& n) {
	for (float v : n.value) {
		if (!std::isfinite(v)) {
			throw NumericError(std::string(op) + ": non-finite value in output of shape " + shape_str(n.shape));
		}
	}
}

Tensor finish(NodePtr n) {
	check_finite(n->op, *n);
	return Tensor(std::move(n));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
	if (a.shape() != b.shape()) {
		throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
	}
}

// Rows/cols view of any tensor treating the last extent as columns.
std::pair<int, int> as_rows_cols(const Tensor& x) {
	const int cols = x.dim(x.ndim() - 1);
	return {x.numel() / cols, cols};
}

void accumulate(Node& dst, const std::vector<float>& g) {
	dst.ensure_grad();
	for (size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

} // namespace

// ----- elementwise -----

Tensor add(const Tensor& a, const Tensor& b) {
	require_same_shape("add", a, b);
	auto n = make_node("add", a.shape(), {a.node(), b.node()});
	const auto& av = a.values();
	const auto& bv = b.values();
	for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + bv[i];
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			for (int k = 0; k < 2; ++k) {
				Node& p = *self.parents[static_cast<size_t>(k)];
				if (!p.requires_grad) continue;
				accumulate(p, self.grad);
			}
		};
	}
	return finish(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
	require_same_shape("sub", a, b);
	auto n = make_node("sub", a.shape(), {a.node(), b.node()});
	const auto& av = a.values();
	const auto& bv = b.values();
	for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] - bv[i];
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& pa = *self.parents[0];
			Node& pb = *self.parents[1];
			if (pa.requires_grad) accumulate(pa, self.grad);
			if (pb.requires_grad) {
				pb.ensure_grad();
				for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
			}
		};
	}
	return finish(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
	require_same_shape("mul", a, b);
	auto n = make_node("mul", a.shape(), {a.node(), b.node()});
	const auto& av = a.values();
	const auto& bv = b.values();
	for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * bv[i];
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& pa = *self.parents[0];
			Node& pb = *self.parents[1];
			if (pa.requires_grad) {
				pa.ensure_grad();
				for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
			}
			if (pb.requires_grad) {
				pb.ensure_grad();
				for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
			}
		};
	}
	return finish(n);
}

Tensor scale(const Tensor& x, float s) { return affine(x, s, 0.0f); }

Tensor affine(const Tensor& x, float scale_v, float shift_v) {
	auto n = make_node("affine", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) n->value[i] = scale_v * xv[i] + shift_v;
	if (n->requires_grad) {
		n->backward_fn = [scale_v](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += scale_v * self.grad[i];
		};
	}
	return finish(n);
}

Tensor relu(const Tensor& x) {
	auto n = make_node("relu", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) n->value[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				if (p.value[i] > 0.0f) p.grad[i] += self.grad[i];
			}
		};
	}
	return finish(n);
}

Tensor tanh_op(const Tensor& x) {
	auto n = make_node("tanh", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) n->value[i] = std::tanh(xv[i]);
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				const float y = self.value[i];
				p.grad[i] += self.grad[i] * (1.0f - y * y);
			}
		};
	}
	return finish(n);
}

Tensor sigmoid(const Tensor& x) {
	auto n = make_node("sigmoid", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) {
		const float v = xv[i];
		n->value[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
	}
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				const float y = self.value[i];
				p.grad[i] += self.grad[i] * y * (1.0f - y);
			}
		};
	}
	return finish(n);
}

Tensor exp_op(const Tensor& x) {
	auto n = make_node("exp", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) n->value[i] = std::exp(xv[i]);
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * self.value[i];
		};
	}
	return finish(n);
}

Tensor softplus(const Tensor& x) {
	auto n = make_node("softplus", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) {
		const float v = xv[i];
		// log(1 + e^v), stable in both tails
		n->value[i] = v > 0.0f ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
	}
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				const float v = p.value[i];
				const float s = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
				p.grad[i] += self.grad[i] * s;
			}
		};
	}
	return finish(n);
}

Tensor clamp(const Tensor& x, float lo, float hi) {
	auto n = make_node("clamp", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (size_t i = 0; i < xv.size(); ++i) n->value[i] = std::min(hi, std::max(lo, xv[i]));
	if (n->requires_grad) {
		n->backward_fn = [lo, hi](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				const float v = p.value[i];
				if (v >= lo && v <= hi) p.grad[i] += self.grad[i];
			}
		};
	}
	return finish(n);
}

Tensor minimum(const Tensor& a, const Tensor& b) {
	require_same_shape("minimum", a, b);
	auto n = make_node("minimum", a.shape(), {a.node(), b.node()});
	const auto& av = a.values();
	const auto& bv = b.values();
	for (size_t i = 0; i < av.size(); ++i) n->value[i] = std::min(av[i], bv[i]);
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& pa = *self.parents[0];
			Node& pb = *self.parents[1];
			if (pa.requires_grad) pa.ensure_grad();
			if (pb.requires_grad) pb.ensure_grad();
			for (size_t i = 0; i < self.grad.size(); ++i) {
				// ties route to the first operand
				if (pa.value[i] <= pb.value[i]) {
					if (pa.requires_grad) pa.grad[i] += self.grad[i];
				} else if (pb.requires_grad) {
					pb.grad[i] += self.grad[i];
				}
			}
		};
	}
	return finish(n);
}

// ----- linear algebra -----

Tensor matmul(const Tensor& a, const Tensor& b) {
	if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
		throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
	}
	const int m = a.dim(0), k = a.dim(1), ncols = b.dim(1);
	auto n = make_node("matmul", {m, ncols}, {a.node(), b.node()});
	CMapM am(a.values().data(), m, k);
	CMapM bm(b.values().data(), k, ncols);
	MapM cm(n->value.data(), m, ncols);
	cm.noalias() = am * bm;
	if (n->requires_grad) {
		n->backward_fn = [m, k, ncols](Node& self) {
			Node& pa = *self.parents[0];
			Node& pb = *self.parents[1];
			CMapM g(self.grad.data(), m, ncols);
			if (pa.requires_grad) {
				pa.ensure_grad();
				MapM ga(pa.grad.data(), m, k);
				CMapM bm(pb.value.data(), k, ncols);
				ga.noalias() += g * bm.transpose();
			}
			if (pb.requires_grad) {
				pb.ensure_grad();
				MapM gb(pb.grad.data(), k, ncols);
				CMapM am(pa.value.data(), m, k);
				gb.noalias() += am.transpose() * g;
			}
		};
	}
	return finish(n);
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
	if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1)) {
		throw ShapeError("bias_add: expected [m,n]+[n], got " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
	}
	const int m = x.dim(0), cols = x.dim(1);
	auto n = make_node("bias_add", x.shape(), {x.node(), b.node()});
	const auto& xv = x.values();
	const auto& bv = b.values();
	for (int r = 0; r < m; ++r) {
		for (int c = 0; c < cols; ++c) {
			n->value[static_cast<size_t>(r * cols + c)] = xv[static_cast<size_t>(r * cols + c)] + bv[static_cast<size_t>(c)];
		}
	}
	if (n->requires_grad) {
		n->backward_fn = [m, cols](Node& self) {
			Node& px = *self.parents[0];
			Node& pb = *self.parents[1];
			if (px.requires_grad) accumulate(px, self.grad);
			if (pb.requires_grad) {
				pb.ensure_grad();
				for (int r = 0; r < m; ++r) {
					for (int c = 0; c < cols; ++c) pb.grad[static_cast<size_t>(c)] += self.grad[static_cast<size_t>(r * cols + c)];
				}
			}
		};
	}
	return finish(n);
}

Tensor transpose2d(const Tensor& x) {
	if (x.ndim() != 2) throw ShapeError("transpose2d: expected 2-d tensor, got " + shape_str(x.shape()));
	const int m = x.dim(0), cols = x.dim(1);
	auto n = make_node("transpose2d", {cols, m}, {x.node()});
	const auto& xv = x.values();
	for (int r = 0; r < m; ++r) {
		for (int c = 0; c < cols; ++c) n->value[static_cast<size_t>(c * m + r)] = xv[static_cast<size_t>(r * cols + c)];
	}
	if (n->requires_grad) {
		n->backward_fn = [m, cols](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (int r = 0; r < m; ++r) {
				for (int c = 0; c < cols; ++c) p.grad[static_cast<size_t>(r * cols + c)] += self.grad[static_cast<size_t>(c * m + r)];
			}
		};
	}
	return finish(n);
}

// ----- shape -----

Tensor reshape(const Tensor& x, Shape shape) {
	if (shape_numel(shape) != x.numel()) {
		throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
	}
	auto n = make_node("reshape", std::move(shape), {x.node()});
	n->value = x.values();
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) { accumulate(*self.parents[0], self.grad); };
	}
	return finish(n);
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
	if (x.ndim() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1) {
		throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) + ") for " + shape_str(x.shape()));
	}
	const int cols = x.dim(1);
	auto n = make_node("slice_rows", {r1 - r0, cols}, {x.node()});
	std::memcpy(n->value.data(), x.values().data() + static_cast<size_t>(r0) * cols, n->value.size() * sizeof(float));
	if (n->requires_grad) {
		n->backward_fn = [r0, cols](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			const size_t off = static_cast<size_t>(r0) * cols;
			for (size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
		};
	}
	return finish(n);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
	if (x.ndim() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1) {
		throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") for " + shape_str(x.shape()));
	}
	const int m = x.dim(0), cols = x.dim(1), w = c1 - c0;
	auto n = make_node("slice_cols", {m, w}, {x.node()});
	const auto& xv = x.values();
	for (int r = 0; r < m; ++r) {
		std::memcpy(n->value.data() + static_cast<size_t>(r) * w, xv.data() + static_cast<size_t>(r) * cols + c0,
			static_cast<size_t>(w) * sizeof(float));
	}
	if (n->requires_grad) {
		n->backward_fn = [c0, cols, w, m](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (int r = 0; r < m; ++r) {
				for (int c = 0; c < w; ++c) {
					p.grad[static_cast<size_t>(r) * cols + c0 + c] += self.grad[static_cast<size_t>(r) * w + c];
				}
			}
		};
	}
	return finish(n);
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
	if (xs.empty()) throw ShapeError("concat_rows: empty input list");
	const int cols = xs[0].ndim() == 2 ? xs[0].dim(1) : xs[0].dim(0);
	int rows = 0;
	std::vector<NodePtr> parents;
	for (const auto& t : xs) {
		const int tc = t.ndim() == 2 ? t.dim(1) : t.dim(0);
		const int tr = t.ndim() == 2 ? t.dim(0) : 1;
		if (t.ndim() > 2 || tc != cols) {
			throw ShapeError("concat_rows: incompatible member shape " + shape_str(t.shape()));
		}
		rows += tr;
		parents.push_back(t.node());
	}
	auto n = make_node("concat_rows", {rows, cols}, std::move(parents));
	size_t off = 0;
	for (const auto& t : xs) {
		std::memcpy(n->value.data() + off, t.values().data(), t.values().size() * sizeof(float));
		off += t.values().size();
	}
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			size_t off = 0;
			for (auto& pp : self.parents) {
				Node& p = *pp;
				if (p.requires_grad) {
					p.ensure_grad();
					for (size_t i = 0; i < p.value.size(); ++i) p.grad[i] += self.grad[off + i];
				}
				off += p.value.size();
			}
		};
	}
	return finish(n);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
	if (xs.empty()) throw ShapeError("concat_cols: empty input list");
	const int rows = xs[0].dim(0);
	int cols = 0;
	std::vector<NodePtr> parents;
	std::vector<int> widths;
	for (const auto& t : xs) {
		if (t.ndim() != 2 || t.dim(0) != rows) {
			throw ShapeError("concat_cols: incompatible member shape " + shape_str(t.shape()));
		}
		widths.push_back(t.dim(1));
		cols += t.dim(1);
		parents.push_back(t.node());
	}
	auto n = make_node("concat_cols", {rows, cols}, std::move(parents));
	int coff = 0;
	for (size_t k = 0; k < xs.size(); ++k) {
		const auto& tv = xs[k].values();
		const int w = widths[k];
		for (int r = 0; r < rows; ++r) {
			std::memcpy(n->value.data() + static_cast<size_t>(r) * cols + coff, tv.data() + static_cast<size_t>(r) * w,
				static_cast<size_t>(w) * sizeof(float));
		}
		coff += w;
	}
	if (n->requires_grad) {
		n->backward_fn = [rows, cols, widths](Node& self) {
			int coff = 0;
			for (size_t k = 0; k < self.parents.size(); ++k) {
				Node& p = *self.parents[k];
				const int w = widths[k];
				if (p.requires_grad) {
					p.ensure_grad();
					for (int r = 0; r < rows; ++r) {
						for (int c = 0; c < w; ++c) {
							p.grad[static_cast<size_t>(r) * w + c] += self.grad[static_cast<size_t>(r) * cols + coff + c];
						}
					}
				}
				coff += w;
			}
		};
	}
	return finish(n);
}

// ----- reductions / losses -----

Tensor sum_all(const Tensor& x) {
	auto n = make_node("sum", {1}, {x.node()});
	double acc = 0.0;
	for (float v : x.values()) acc += v;
	n->value[0] = static_cast<float>(acc);
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			const float g = self.grad[0];
			for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
		};
	}
	return finish(n);
}

Tensor mean_all(const Tensor& x) {
	auto n = make_node("mean", {1}, {x.node()});
	double acc = 0.0;
	for (float v : x.values()) acc += v;
	n->value[0] = static_cast<float>(acc / x.numel());
	if (n->requires_grad) {
		const float inv = 1.0f / static_cast<float>(x.numel());
		n->backward_fn = [inv](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			const float g = self.grad[0] * inv;
			for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
		};
	}
	return finish(n);
}

Tensor mse(const Tensor& a, const Tensor& b) {
	require_same_shape("mse", a, b);
	auto n = make_node("mse", {1}, {a.node(), b.node()});
	const auto& av = a.values();
	const auto& bv = b.values();
	double acc = 0.0;
	for (size_t i = 0; i < av.size(); ++i) {
		const double d = static_cast<double>(av[i]) - bv[i];
		acc += d * d;
	}
	n->value[0] = static_cast<float>(acc / av.size());
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& pa = *self.parents[0];
			Node& pb = *self.parents[1];
			const float g = self.grad[0] * 2.0f / static_cast<float>(pa.value.size());
			if (pa.requires_grad) pa.ensure_grad();
			if (pb.requires_grad) pb.ensure_grad();
			for (size_t i = 0; i < pa.value.size(); ++i) {
				const float d = g * (pa.value[i] - pb.value[i]);
				if (pa.requires_grad) pa.grad[i] += d;
				if (pb.requires_grad) pb.grad[i] -= d;
			}
		};
	}
	return finish(n);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
	require_same_shape("bce", logits, targets);
	auto n = make_node("bce", {1}, {logits.node(), targets.node()});
	const auto& lv = logits.values();
	const auto& tv = targets.values();
	double acc = 0.0;
	for (size_t i = 0; i < lv.size(); ++i) {
		const double l = lv[i], t = tv[i];
		acc += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
	}
	n->value[0] = static_cast<float>(acc / lv.size());
	if (n->requires_grad) {
		n->backward_fn = [](Node& self) {
			Node& pl = *self.parents[0];
			Node& pt = *self.parents[1];
			const float g = self.grad[0] / static_cast<float>(pl.value.size());
			if (pl.requires_grad) pl.ensure_grad();
			if (pt.requires_grad) pt.ensure_grad();
			for (size_t i = 0; i < pl.value.size(); ++i) {
				const float l = pl.value[i];
				const float s = l >= 0.0f ? 1.0f / (1.0f + std::exp(-l)) : std::exp(l) / (1.0f + std::exp(l));
				if (pl.requires_grad) pl.grad[i] += g * (s - pt.value[i]);
				if (pt.requires_grad) pt.grad[i] += g * (-l);
			}
		};
	}
	return finish(n);
}

Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar) {
	require_same_shape("gaussian_kl", mu, logvar);
	const int batch = mu.ndim() >= 2 ? mu.dim(0) : 1;
	auto n = make_node("gaussian_kl", {1}, {mu.node(), logvar.node()});
	const auto& mv = mu.values();
	const auto& lv = logvar.values();
	double acc = 0.0;
	for (size_t i = 0; i < mv.size(); ++i) {
		const double clv = std::min(10.0f, std::max(-10.0f, lv[i]));
		acc += 0.5 * (std::exp(clv) + static_cast<double>(mv[i]) * mv[i] - 1.0 - clv);
	}
	n->value[0] = static_cast<float>(acc / batch);
	if (n->requires_grad) {
		n->backward_fn = [batch](Node& self) {
			Node& pm = *self.parents[0];
			Node& pl = *self.parents[1];
			const float g = self.grad[0] / static_cast<float>(batch);
			if (pm.requires_grad) pm.ensure_grad();
			if (pl.requires_grad) pl.ensure_grad();
			for (size_t i = 0; i < pm.value.size(); ++i) {
				if (pm.requires_grad) pm.grad[i] += g * pm.value[i];
				if (pl.requires_grad) {
					const float l = pl.value[i];
					if (l >= -10.0f && l <= 10.0f) pl.grad[i] += g * 0.5f * (std::exp(l) - 1.0f);
				}
			}
		};
	}
	return finish(n);
}

// ----- softmax family -----

Tensor softmax(const Tensor& x) {
	auto [rows, cols] = as_rows_cols(x);
	auto n = make_node("softmax", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (int r = 0; r < rows; ++r) {
		const float* row = xv.data() + static_cast<size_t>(r) * cols;
		float* out = n->value.data() + static_cast<size_t>(r) * cols;
		float mx = row[0];
		for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
		double denom = 0.0;
		for (int c = 0; c < cols; ++c) {
			out[c] = std::exp(row[c] - mx);
			denom += out[c];
		}
		const float inv = static_cast<float>(1.0 / denom);
		for (int c = 0; c < cols; ++c) out[c] *= inv;
	}
	if (n->requires_grad) {
		n->backward_fn = [rows, cols](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (int r = 0; r < rows; ++r) {
				const float* y = self.value.data() + static_cast<size_t>(r) * cols;
				const float* gy = self.grad.data() + static_cast<size_t>(r) * cols;
				float* gx = p.grad.data() + static_cast<size_t>(r) * cols;
				double dot = 0.0;
				for (int c = 0; c < cols; ++c) dot += static_cast<double>(gy[c]) * y[c];
				for (int c = 0; c < cols; ++c) gx[c] += y[c] * (gy[c] - static_cast<float>(dot));
			}
		};
	}
	return finish(n);
}

Tensor log_softmax(const Tensor& x) {
	auto [rows, cols] = as_rows_cols(x);
	auto n = make_node("log_softmax", x.shape(), {x.node()});
	const auto& xv = x.values();
	for (int r = 0; r < rows; ++r) {
		const float* row = xv.data() + static_cast<size_t>(r) * cols;
		float* out = n->value.data() + static_cast<size_t>(r) * cols;
		float mx = row[0];
		for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
		double denom = 0.0;
		for (int c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(row[c]) - mx);
		const float lse = mx + static_cast<float>(std::log(denom));
		for (int c = 0; c < cols; ++c) out[c] = row[c] - lse;
	}
	if (n->requires_grad) {
		n->backward_fn = [rows, cols](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (int r = 0; r < rows; ++r) {
				const float* ls = self.value.data() + static_cast<size_t>(r) * cols;
				const float* gy = self.grad.data() + static_cast<size_t>(r) * cols;
				float* gx = p.grad.data() + static_cast<size_t>(r) * cols;
				double gsum = 0.0;
				for (int c = 0; c < cols; ++c) gsum += gy[c];
				for (int c = 0; c < cols; ++c) gx[c] += gy[c] - std::exp(ls[c]) * static_cast<float>(gsum);
			}
		};
	}
	return finish(n);
}

Tensor causal_softmax(const Tensor& scores) {
	if (scores.ndim() != 2 || scores.dim(0) != scores.dim(1)) {
		throw ShapeError("causal_softmax: expected square matrix, got " + shape_str(scores.shape()));
	}
	const int t = scores.dim(0);
	auto n = make_node("causal_softmax", scores.shape(), {scores.node()});
	const auto& xv = scores.values();
	std::fill(n->value.begin(), n->value.end(), 0.0f);
	for (int r = 0; r < t; ++r) {
		const float* row = xv.data() + static_cast<size_t>(r) * t;
		float* out = n->value.data() + static_cast<size_t>(r) * t;
		float mx = row[0];
		for (int c = 1; c <= r; ++c) mx = std::max(mx, row[c]);
		double denom = 0.0;
		for (int c = 0; c <= r; ++c) {
			out[c] = std::exp(row[c] - mx);
			denom += out[c];
		}
		const float inv = static_cast<float>(1.0 / denom);
		for (int c = 0; c <= r; ++c) out[c] *= inv;
	}
	if (n->requires_grad) {
		n->backward_fn = [t](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (int r = 0; r < t; ++r) {
				const float* y = self.value.data() + static_cast<size_t>(r) * t;
				const float* gy = self.grad.data() + static_cast<size_t>(r) * t;
				float* gx = p.grad.data() + static_cast<size_t>(r) * t;
				double dot = 0.0;
				for (int c = 0; c <= r; ++c) dot += static_cast<double>(gy[c]) * y[c];
				for (int c = 0; c <= r; ++c) gx[c] += y[c] * (gy[c] - static_cast<float>(dot));
			}
		};
	}
	return finish(n);
}

Tensor select_per_row(const Tensor& x, const std::vector<int>& idx) {
	if (x.ndim() != 2 || static_cast<int>(idx.size()) != x.dim(0)) {
		throw ShapeError("select_per_row: need one index per row of " + shape_str(x.shape()));
	}
	const int rows = x.dim(0), cols = x.dim(1);
	for (int i : idx) {
		if (i < 0 || i >= cols) throw ShapeError("select_per_row: index " + std::to_string(i) + " out of range");
	}
	auto n = make_node("select_per_row", {rows}, {x.node()});
	const auto& xv = x.values();
	for (int r = 0; r < rows; ++r) n->value[static_cast<size_t>(r)] = xv[static_cast<size_t>(r) * cols + idx[static_cast<size_t>(r)]];
	if (n->requires_grad) {
		n->backward_fn = [idx, cols](Node& self) {
			Node& p = *self.parents[0];
			p.ensure_grad();
			for (size_t r = 0; r < idx.size(); ++r) p.grad[r * cols + idx[r]] += self.grad[r];
		};
	}
	return finish(n);
}

// ----- normalization -----

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
	auto [rows, cols] = as_rows_cols(x);
	if (gamma.numel() != cols || beta.numel() != cols) {
		throw ShapeError("layernorm: gamma/beta must match last dim " + std::to_string(cols));
	}
	constexpr float kEps = 1e-5f;
	auto n = make_node("layernorm", x.shape(), {x.node(), gamma.node(), beta.node()});
	const auto& xv = x.values();
	const auto& gv = gamma.values();
	const auto& bv = beta.values();
	for (int r = 0; r < rows; ++r) {
		const float* row = xv.data() + static_cast<size_t>(r) * cols;
		float* out = n->value.data() + static_cast<size_t>(r) * cols;
		double mean = 0.0;
		for (int c = 0; c < cols; ++c) mean += row[c];
		mean /= cols;
		double var = 0.0;
		for (int c = 0; c < cols; ++c) {
			const double d = row[c] - mean;
			var += d * d;
		}
		var /= cols;
		const float inv_std = static_cast<float>(1.0 / std::sqrt(var + kEps));
		for (int c = 0; c < cols; ++c) {
			const float xh = (row[c] - static_cast<float>(mean)) * inv_std;
			out[c] = xh * gv[static_cast<size_t>(c)] + bv[static_cast<size_t>(c)];
		}
	}
	if (n->requires_grad) {
		n->backward_fn = [rows, cols](Node& self) {
			Node& px = *self.parents[0];
			Node& pg = *self.parents[1];
			Node& pb = *self.parents[2];
			constexpr float eps = 1e-5f;
			if (px.requires_grad) px.ensure_grad();
			if (pg.requires_grad) pg.ensure_grad();
			if (pb.requires_grad) pb.ensure_grad();
			std::vector<float> xhat(static_cast<size_t>(cols));
			for (int r = 0; r < rows; ++r) {
				const float* row = px.value.data() + static_cast<size_t>(r) * cols;
				const float* gy = self.grad.data() + static_cast<size_t>(r) * cols;
				double mean = 0.0;
				for (int c = 0; c < cols; ++c) mean += row[c];
				mean /= cols;
				double var = 0.0;
				for (int c = 0; c < cols; ++c) {
					const double d = row[c] - mean;
					var += d * d;
				}
				var /= cols;
				const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
				for (int c = 0; c < cols; ++c) xhat[static_cast<size_t>(c)] = (row[c] - static_cast<float>(mean)) * inv_std;
				if (pg.requires_grad || pb.requires_grad) {
					for (int c = 0; c < cols; ++c) {
						if (pg.requires_grad) pg.grad[static_cast<size_t>(c)] += gy[c] * xhat[static_cast<size_t>(c)];
						if (pb.requires_grad) pb.grad[static_cast<size_t>(c)] += gy[c];
					}
				}
				if (px.requires_grad) {
					const float* gw = pg.value.data();
					double sum_dxh = 0.0, sum_dxh_xh = 0.0;
					for (int c = 0; c < cols; ++c) {
						const float dxh = gy[c] * gw[c];
						sum_dxh += dxh;
						sum_dxh_xh += static_cast<double>(dxh) * xhat[static_cast<size_t>(c)];
					}
					float* gx = px.grad.data() + static_cast<size_t>(r) * cols;
					const float m1 = static_cast<float>(sum_dxh / cols);
					const float m2 = static_cast<float>(sum_dxh_xh / cols);
					for (int c = 0; c < cols; ++c) {
						const float dxh = gy[c] * gw[c];
						gx[c] += inv_std * (dxh - m1 - xhat[static_cast<size_t>(c)] * m2);
					}
				}
			}
		};
	}
	return finish(n);
}

// ----- attention -----

Tensor causal_self_attention(
	const Tensor& x, const Tensor& wqkv, const Tensor& bqkv, const Tensor& wo, const Tensor& bo, int n_heads) {
	if (x.ndim() != 2) throw ShapeError("attention: input must be [T,E], got " + shape_str(x.shape()));
	const int embed = x.dim(1);
	if (embed % n_heads != 0) {
		throw ShapeError("attention: embed " + std::to_string(embed) + " not divisible by heads " + std::to_string(n_heads));
	}
	if (wqkv.dim(0) != embed || wqkv.dim(1) != 3 * embed) {
		throw ShapeError("attention: wqkv must be [E,3E], got " + shape_str(wqkv.shape()));
	}
	const int dh = embed / n_heads;
	const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
	Tensor qkv = dense(x, wqkv, bqkv);
	std::vector<Tensor> heads;
	heads.reserve(static_cast<size_t>(n_heads));
	for (int h = 0; h < n_heads; ++h) {
		Tensor q = slice_cols(qkv, h * dh, (h + 1) * dh);
		Tensor k = slice_cols(qkv, embed + h * dh, embed + (h + 1) * dh);
		Tensor v = slice_cols(qkv, 2 * embed + h * dh, 2 * embed + (h + 1) * dh);
		Tensor att = causal_softmax(scale(matmul(q, transpose2d(k)), inv_sqrt_dh));
		heads.push_back(matmul(att, v));
	}
	return dense(concat_cols(heads), wo, bo);
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
	Tensor y = matmul(x, w);
	return b.defined() ? bias_add(y, b) : y;
}

Tensor detach(const Tensor& x) { return Tensor::from_data(x.shape(), x.values()); }

} // namespace ops
} // namespace navmini

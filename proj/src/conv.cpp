#include "navmini/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace navmini {
namespace ops {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace {

NodePtr make_conv_node(const char* op, Shape shape, std::vector<NodePtr> parents) {
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

void check_finite_conv(const char* op, const Node& n) {
	for (float v : n.value) {
		if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
	}
}

// Unfold one image [C,H,W] into a column block [C*kh*kw, OH*OW] at `col`
// with row stride `col_stride` (so whole batches share one matrix).
void im2col(const float* img, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, float* col,
	size_t col_stride) {
	for (int c = 0; c < c_in; ++c) {
		for (int i = 0; i < kh; ++i) {
			for (int j = 0; j < kw; ++j) {
				float* dst = col + (static_cast<size_t>(c) * kh * kw + static_cast<size_t>(i) * kw + j) * col_stride;
				for (int oy = 0; oy < oh; ++oy) {
					const int y = oy * stride - pad + i;
					if (y < 0 || y >= h) {
						std::memset(dst + static_cast<size_t>(oy) * ow, 0, static_cast<size_t>(ow) * sizeof(float));
						continue;
					}
					const float* src_row = img + (static_cast<size_t>(c) * h + y) * w;
					for (int ox = 0; ox < ow; ++ox) {
						const int x = ox * stride - pad + j;
						dst[static_cast<size_t>(oy) * ow + ox] = (x >= 0 && x < w) ? src_row[x] : 0.0f;
					}
				}
			}
		}
	}
}

// Fold one column block back into the image, accumulating overlaps.
void col2im_add(const float* col, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, float* img,
	size_t col_stride) {
	for (int c = 0; c < c_in; ++c) {
		for (int i = 0; i < kh; ++i) {
			for (int j = 0; j < kw; ++j) {
				const float* src = col + (static_cast<size_t>(c) * kh * kw + static_cast<size_t>(i) * kw + j) * col_stride;
				for (int oy = 0; oy < oh; ++oy) {
					const int y = oy * stride - pad + i;
					if (y < 0 || y >= h) continue;
					float* dst_row = img + (static_cast<size_t>(c) * h + y) * w;
					for (int ox = 0; ox < ow; ++ox) {
						const int x = ox * stride - pad + j;
						if (x >= 0 && x < w) dst_row[x] += src[static_cast<size_t>(oy) * ow + ox];
					}
				}
			}
		}
	}
}

struct ConvDims {
	int n, c_in, h, w, f, kh, kw, oh, ow;
};

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
	if (x.ndim() != 4 || w.ndim() != 4) {
		throw ShapeError("conv2d: expected x [N,C,H,W], w [F,C,kh,kw]; got " + shape_str(x.shape()) + ", " + shape_str(w.shape()));
	}
	if (x.dim(1) != w.dim(1)) {
		throw ShapeError("conv2d: channel mismatch, x has " + std::to_string(x.dim(1)) + ", kernel expects " + std::to_string(w.dim(1)));
	}
	if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
	ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
	if ((d.h + 2 * pad - d.kh) < 0 || (d.w + 2 * pad - d.kw) < 0) {
		throw ShapeError("conv2d: kernel larger than padded input");
	}
	d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
	d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
	if (b.defined() && b.numel() != d.f) throw ShapeError("conv2d: bias length must equal output channels");

	auto n = make_conv_node("conv2d", {d.n, d.f, d.oh, d.ow}, {x.node(), w.node(), b.defined() ? b.node() : Tensor::zeros({1}).node()});
	const int kdim = d.c_in * d.kh * d.kw;
	const int patches = d.oh * d.ow;
	const size_t cols = static_cast<size_t>(d.n) * patches;
	const size_t in_stride = static_cast<size_t>(d.c_in) * d.h * d.w;

	// one unfolded matrix for the whole batch: [kdim, N*OH*OW]
	std::vector<float> col(static_cast<size_t>(kdim) * cols);
	for (int i = 0; i < d.n; ++i) {
		im2col(x.values().data() + i * in_stride, d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.oh, d.ow,
			col.data() + static_cast<size_t>(i) * patches, cols);
	}
	// output viewed as [F, N*OH*OW] column blocks per sample, then shuffled
	// into [N,F,OH,OW]
	std::vector<float> out_mat(static_cast<size_t>(d.f) * cols);
	{
		CMapM wm(w.values().data(), d.f, kdim);
		CMapM cm(col.data(), kdim, static_cast<Eigen::Index>(cols));
		MapM om(out_mat.data(), d.f, static_cast<Eigen::Index>(cols));
		om.noalias() = wm * cm;
	}
	for (int i = 0; i < d.n; ++i) {
		for (int f = 0; f < d.f; ++f) {
			const float* src = out_mat.data() + static_cast<size_t>(f) * cols + static_cast<size_t>(i) * patches;
			float* dst = n->value.data() + (static_cast<size_t>(i) * d.f + f) * patches;
			if (b.defined()) {
				const float bias = b.values()[static_cast<size_t>(f)];
				for (int p = 0; p < patches; ++p) dst[p] = src[p] + bias;
			} else {
				std::memcpy(dst, src, static_cast<size_t>(patches) * sizeof(float));
			}
		}
	}

	if (n->requires_grad) {
		const bool has_bias = b.defined();
		n->backward_fn = [d, stride, pad, kdim, patches, cols, in_stride, has_bias](Node& self) {
			Node& px = *self.parents[0];
			Node& pw = *self.parents[1];
			Node& pb = *self.parents[2];
			if (px.requires_grad) px.ensure_grad();
			if (pw.requires_grad) pw.ensure_grad();
			if (has_bias && pb.requires_grad) pb.ensure_grad();

			// gradient rearranged to [F, N*OH*OW]
			std::vector<float> gout(static_cast<size_t>(d.f) * cols);
			for (int i = 0; i < d.n; ++i) {
				for (int f = 0; f < d.f; ++f) {
					std::memcpy(gout.data() + static_cast<size_t>(f) * cols + static_cast<size_t>(i) * patches,
						self.grad.data() + (static_cast<size_t>(i) * d.f + f) * patches, static_cast<size_t>(patches) * sizeof(float));
				}
			}
			std::vector<float> col(static_cast<size_t>(kdim) * cols);
			if (pw.requires_grad || px.requires_grad) {
				if (pw.requires_grad) {
					for (int i = 0; i < d.n; ++i) {
						im2col(px.value.data() + i * in_stride, d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.oh, d.ow,
							col.data() + static_cast<size_t>(i) * patches, cols);
					}
					MapM gw(pw.grad.data(), d.f, kdim);
					CMapM gm(gout.data(), d.f, static_cast<Eigen::Index>(cols));
					CMapM cm(col.data(), kdim, static_cast<Eigen::Index>(cols));
					gw.noalias() += gm * cm.transpose();
				}
				if (px.requires_grad) {
					CMapM wm(pw.value.data(), d.f, kdim);
					CMapM gm(gout.data(), d.f, static_cast<Eigen::Index>(cols));
					MapM cg(col.data(), kdim, static_cast<Eigen::Index>(cols));
					cg.noalias() = wm.transpose() * gm;
					for (int i = 0; i < d.n; ++i) {
						col2im_add(col.data() + static_cast<size_t>(i) * patches, d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.oh,
							d.ow, px.grad.data() + i * in_stride, cols);
					}
				}
			}
			if (has_bias && pb.requires_grad) {
				for (int f = 0; f < d.f; ++f) {
					double acc = 0.0;
					const float* g = gout.data() + static_cast<size_t>(f) * cols;
					for (size_t p = 0; p < cols; ++p) acc += g[p];
					pb.grad[static_cast<size_t>(f)] += static_cast<float>(acc);
				}
			}
		};
	}
	check_finite_conv("conv2d", *n);
	return Tensor(std::move(n));
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
	if (x.ndim() != 4 || w.ndim() != 4) {
		throw ShapeError(
			"conv_transpose2d: expected x [N,C,H,W], w [C,F,kh,kw]; got " + shape_str(x.shape()) + ", " + shape_str(w.shape()));
	}
	if (x.dim(1) != w.dim(0)) {
		throw ShapeError("conv_transpose2d: channel mismatch, x has " + std::to_string(x.dim(1)) + ", kernel expects " + std::to_string(w.dim(0)));
	}
	if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
	ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(1), w.dim(2), w.dim(3), 0, 0};
	d.oh = (d.h - 1) * stride + d.kh - 2 * pad;
	d.ow = (d.w - 1) * stride + d.kw - 2 * pad;
	if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv_transpose2d: non-positive output size");
	if (b.defined() && b.numel() != d.f) throw ShapeError("conv_transpose2d: bias length must equal output channels");

	auto n =
		make_conv_node("conv_transpose2d", {d.n, d.f, d.oh, d.ow}, {x.node(), w.node(), b.defined() ? b.node() : Tensor::zeros({1}).node()});
	const int kdim = d.f * d.kh * d.kw;
	const int positions = d.h * d.w;
	const size_t cols = static_cast<size_t>(d.n) * positions;
	const size_t in_stride = static_cast<size_t>(d.c_in) * positions;
	const size_t out_stride = static_cast<size_t>(d.f) * d.oh * d.ow;

	// x viewed as [C, N*H*W] column blocks
	std::vector<float> x_mat(static_cast<size_t>(d.c_in) * cols);
	for (int i = 0; i < d.n; ++i) {
		for (int c = 0; c < d.c_in; ++c) {
			std::memcpy(x_mat.data() + static_cast<size_t>(c) * cols + static_cast<size_t>(i) * positions,
				x.values().data() + (static_cast<size_t>(i) * d.c_in + c) * positions, static_cast<size_t>(positions) * sizeof(float));
		}
	}
	std::vector<float> col(static_cast<size_t>(kdim) * cols);
	{
		CMapM wm(w.values().data(), d.c_in, kdim);
		CMapM xm(x_mat.data(), d.c_in, static_cast<Eigen::Index>(cols));
		MapM cm(col.data(), kdim, static_cast<Eigen::Index>(cols));
		cm.noalias() = wm.transpose() * xm;
	}
	std::fill(n->value.begin(), n->value.end(), 0.0f);
	for (int i = 0; i < d.n; ++i) {
		col2im_add(col.data() + static_cast<size_t>(i) * positions, d.f, d.oh, d.ow, d.kh, d.kw, stride, pad, d.h, d.w,
			n->value.data() + i * out_stride, cols);
	}
	if (b.defined()) {
		const auto& bv = b.values();
		for (int i = 0; i < d.n; ++i) {
			float* out = n->value.data() + i * out_stride;
			for (int f = 0; f < d.f; ++f) {
				float* plane = out + static_cast<size_t>(f) * d.oh * d.ow;
				for (int p = 0; p < d.oh * d.ow; ++p) plane[p] += bv[static_cast<size_t>(f)];
			}
		}
	}

	if (n->requires_grad) {
		const bool has_bias = b.defined();
		n->backward_fn = [d, stride, pad, kdim, positions, cols, in_stride, out_stride, has_bias](Node& self) {
			Node& px = *self.parents[0];
			Node& pw = *self.parents[1];
			Node& pb = *self.parents[2];
			if (px.requires_grad) px.ensure_grad();
			if (pw.requires_grad) pw.ensure_grad();
			if (has_bias && pb.requires_grad) pb.ensure_grad();

			// unfold the output gradient at every input position: [kdim, N*H*W]
			std::vector<float> col(static_cast<size_t>(kdim) * cols);
			for (int i = 0; i < d.n; ++i) {
				im2col(self.grad.data() + i * out_stride, d.f, d.oh, d.ow, d.kh, d.kw, stride, pad, d.h, d.w,
					col.data() + static_cast<size_t>(i) * positions, cols);
			}
			CMapM cm(col.data(), kdim, static_cast<Eigen::Index>(cols));
			if (px.requires_grad) {
				std::vector<float> gx_mat(static_cast<size_t>(d.c_in) * cols);
				CMapM wm(pw.value.data(), d.c_in, kdim);
				MapM gx(gx_mat.data(), d.c_in, static_cast<Eigen::Index>(cols));
				gx.noalias() = wm * cm;
				for (int i = 0; i < d.n; ++i) {
					for (int c = 0; c < d.c_in; ++c) {
						const float* src = gx_mat.data() + static_cast<size_t>(c) * cols + static_cast<size_t>(i) * positions;
						float* dst = px.grad.data() + (static_cast<size_t>(i) * d.c_in + c) * positions;
						for (int p = 0; p < positions; ++p) dst[p] += src[p];
					}
				}
			}
			if (pw.requires_grad) {
				std::vector<float> x_mat(static_cast<size_t>(d.c_in) * cols);
				for (int i = 0; i < d.n; ++i) {
					for (int c = 0; c < d.c_in; ++c) {
						std::memcpy(x_mat.data() + static_cast<size_t>(c) * cols + static_cast<size_t>(i) * positions,
							px.value.data() + (static_cast<size_t>(i) * d.c_in + c) * positions,
							static_cast<size_t>(positions) * sizeof(float));
					}
				}
				MapM gw(pw.grad.data(), d.c_in, kdim);
				CMapM xm(x_mat.data(), d.c_in, static_cast<Eigen::Index>(cols));
				gw.noalias() += xm * cm.transpose();
			}
			if (has_bias && pb.requires_grad) {
				for (int i = 0; i < d.n; ++i) {
					const float* g = self.grad.data() + i * out_stride;
					for (int f = 0; f < d.f; ++f) {
						double acc = 0.0;
						const float* plane = g + static_cast<size_t>(f) * d.oh * d.ow;
						for (int p = 0; p < d.oh * d.ow; ++p) acc += plane[p];
						pb.grad[static_cast<size_t>(f)] += static_cast<float>(acc);
					}
				}
			}
		};
	}
	check_finite_conv("conv_transpose2d", *n);
	return Tensor(std::move(n));
}

} // namespace ops
} // namespace navmini

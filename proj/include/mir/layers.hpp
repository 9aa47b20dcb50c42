#pragma once

// Forward and backward passes for the layer primitives of the autoencoder and
// classifier. Everything here is a pure function of its arguments; the
// "context" of a backward pass is simply the forward inputs passed back in.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mir {

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, const char* what) {
	if (stride == 0) throw ShapeError(std::string(what) + ": stride must be positive");
	if (k == 0 || k > in)
		throw ShapeError(std::string(what) + ": window " + std::to_string(k) + " exceeds extent " +
		                 std::to_string(in));
	return (in - k) / stride + 1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Convolution (valid, no padding)

struct Conv2dGrads {
	Tensor input;
	Tensor kernels;
	std::vector<double> bias;
};

/// input [C,H,W], kernels [F,C,k,k] -> [F,H',W'] with H' = (H-k)/stride + 1.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, std::span<const double> bias,
                             std::size_t stride = 1) {
	require_rank(input, 3, "conv2d_forward input");
	require_rank(kernels, 4, "conv2d_forward kernels");
	const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t F = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
	if (kernels.dim(1) != C)
		throw ShapeError("conv2d_forward: kernels expect " + std::to_string(kernels.dim(1)) +
		                 " input channels but input " + shape_str(input.shape()) + " has " + std::to_string(C));
	if (bias.size() != F)
		throw ShapeError("conv2d_forward: bias length " + std::to_string(bias.size()) + " != filter count " +
		                 std::to_string(F));
	const std::size_t OH = detail::conv_out_extent(H, kh, stride, "conv2d_forward");
	const std::size_t OW = detail::conv_out_extent(W, kw, stride, "conv2d_forward");

	Tensor out({F, OH, OW});
	const double* in = input.data();
	const double* K = kernels.data();
	double* o = out.data();
	for (std::size_t f = 0; f < F; ++f) {
		double* of = o + f * OH * OW;
		for (std::size_t i = 0; i < OH * OW; ++i) of[i] = bias[f];
		for (std::size_t c = 0; c < C; ++c) {
			const double* ic = in + c * H * W;
			const double* kc = K + (f * C + c) * kh * kw;
			for (std::size_t u = 0; u < kh; ++u)
				for (std::size_t v = 0; v < kw; ++v) {
					const double kv = kc[u * kw + v];
					for (std::size_t oy = 0; oy < OH; ++oy) {
						const double* row = ic + (oy * stride + u) * W + v;
						double* orow = of + oy * OW;
						for (std::size_t ox = 0; ox < OW; ++ox) orow[ox] += kv * row[ox * stride];
					}
				}
		}
	}
	return out;
}

inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                                   const Tensor& grad_out) {
	require_rank(input, 3, "conv2d_backward input");
	require_rank(kernels, 4, "conv2d_backward kernels");
	const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t F = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
	if (kernels.dim(1) != C) throw ShapeError("conv2d_backward: kernel/input channel mismatch");
	const std::size_t OH = detail::conv_out_extent(H, kh, stride, "conv2d_backward");
	const std::size_t OW = detail::conv_out_extent(W, kw, stride, "conv2d_backward");
	if (grad_out.shape() != Shape{F, OH, OW})
		throw ShapeError("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
		                 " does not match forward output " + shape_str({F, OH, OW}));

	Conv2dGrads g{Tensor::zeros_like(input), Tensor::zeros_like(kernels), std::vector<double>(F, 0.0)};
	const double* in = input.data();
	const double* K = kernels.data();
	const double* go = grad_out.data();
	double* gi = g.input.data();
	double* gk = g.kernels.data();
	for (std::size_t f = 0; f < F; ++f) {
		const double* gof = go + f * OH * OW;
		double bsum = 0.0;
		for (std::size_t i = 0; i < OH * OW; ++i) bsum += gof[i];
		g.bias[f] = bsum;
		for (std::size_t c = 0; c < C; ++c) {
			const double* ic = in + c * H * W;
			double* gic = gi + c * H * W;
			const std::size_t kbase = (f * C + c) * kh * kw;
			for (std::size_t u = 0; u < kh; ++u)
				for (std::size_t v = 0; v < kw; ++v) {
					const double kv = K[kbase + u * kw + v];
					double acc = 0.0;
					for (std::size_t oy = 0; oy < OH; ++oy) {
						const std::size_t roff = (oy * stride + u) * W + v;
						const double* row = ic + roff;
						double* grow = gic + roff;
						const double* grow_out = gof + oy * OW;
						for (std::size_t ox = 0; ox < OW; ++ox) {
							acc += grow_out[ox] * row[ox * stride];
							grow[ox * stride] += kv * grow_out[ox];
						}
					}
					gk[kbase + u * kw + v] = acc;
				}
		}
	}
	return g;
}

// ---------------------------------------------------------------------------
// Transposed convolution

/// Output extent of a transposed convolution: (in - 1) * stride + k.
inline std::size_t deconv_out_extent(std::size_t in, std::size_t k, std::size_t stride) {
	return (in - 1) * stride + k;
}

/// input [Ci,H,W], kernels [Ci,Co,k,k] -> [Co,(H-1)*stride+k,(W-1)*stride+k].
inline Tensor deconv2d_forward(const Tensor& input, const Tensor& kernels, std::span<const double> bias,
                               std::size_t stride = 1) {
	require_rank(input, 3, "deconv2d_forward input");
	require_rank(kernels, 4, "deconv2d_forward kernels");
	if (stride == 0) throw ShapeError("deconv2d_forward: stride must be positive");
	const std::size_t Ci = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t Co = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
	if (kernels.dim(0) != Ci)
		throw ShapeError("deconv2d_forward: kernels expect " + std::to_string(kernels.dim(0)) +
		                 " input channels but input " + shape_str(input.shape()) + " has " + std::to_string(Ci));
	if (bias.size() != Co)
		throw ShapeError("deconv2d_forward: bias length " + std::to_string(bias.size()) +
		                 " != output channels " + std::to_string(Co));
	const std::size_t OH = deconv_out_extent(H, kh, stride), OW = deconv_out_extent(W, kw, stride);

	Tensor out({Co, OH, OW});
	double* o = out.data();
	for (std::size_t co = 0; co < Co; ++co)
		for (std::size_t i = 0; i < OH * OW; ++i) o[co * OH * OW + i] = bias[co];
	const double* in = input.data();
	const double* K = kernels.data();
	for (std::size_t ci = 0; ci < Ci; ++ci) {
		const double* ic = in + ci * H * W;
		for (std::size_t co = 0; co < Co; ++co) {
			const double* kc = K + (ci * Co + co) * kh * kw;
			double* oc = o + co * OH * OW;
			for (std::size_t u = 0; u < kh; ++u)
				for (std::size_t v = 0; v < kw; ++v) {
					const double kv = kc[u * kw + v];
					for (std::size_t y = 0; y < H; ++y) {
						double* orow = oc + (y * stride + u) * OW + v;
						const double* irow = ic + y * W;
						for (std::size_t x = 0; x < W; ++x) orow[x * stride] += kv * irow[x];
					}
				}
		}
	}
	return out;
}

inline Conv2dGrads deconv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                                     const Tensor& grad_out) {
	require_rank(input, 3, "deconv2d_backward input");
	require_rank(kernels, 4, "deconv2d_backward kernels");
	if (stride == 0) throw ShapeError("deconv2d_backward: stride must be positive");
	const std::size_t Ci = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t Co = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
	if (kernels.dim(0) != Ci) throw ShapeError("deconv2d_backward: kernel/input channel mismatch");
	const std::size_t OH = deconv_out_extent(H, kh, stride), OW = deconv_out_extent(W, kw, stride);
	if (grad_out.shape() != Shape{Co, OH, OW})
		throw ShapeError("deconv2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
		                 " does not match forward output " + shape_str({Co, OH, OW}));

	Conv2dGrads g{Tensor::zeros_like(input), Tensor::zeros_like(kernels), std::vector<double>(Co, 0.0)};
	const double* in = input.data();
	const double* K = kernels.data();
	const double* go = grad_out.data();
	for (std::size_t co = 0; co < Co; ++co) {
		double s = 0.0;
		for (std::size_t i = 0; i < OH * OW; ++i) s += go[co * OH * OW + i];
		g.bias[co] = s;
	}
	double* gi = g.input.data();
	double* gk = g.kernels.data();
	for (std::size_t ci = 0; ci < Ci; ++ci) {
		const double* ic = in + ci * H * W;
		double* gic = gi + ci * H * W;
		for (std::size_t co = 0; co < Co; ++co) {
			const std::size_t kbase = (ci * Co + co) * kh * kw;
			const double* goc = go + co * OH * OW;
			for (std::size_t u = 0; u < kh; ++u)
				for (std::size_t v = 0; v < kw; ++v) {
					const double kv = K[kbase + u * kw + v];
					double acc = 0.0;
					for (std::size_t y = 0; y < H; ++y) {
						const double* grow = goc + (y * stride + u) * OW + v;
						const double* irow = ic + y * W;
						double* girow = gic + y * W;
						for (std::size_t x = 0; x < W; ++x) {
							const double gv = grow[x * stride];
							acc += gv * irow[x];
							girow[x] += kv * gv;
						}
					}
					gk[kbase + u * kw + v] = acc;
				}
		}
	}
	return g;
}

// ---------------------------------------------------------------------------
// Max pooling

/// Flat argmax positions recorded by maxpool_forward, one per output cell.
struct PoolIndices {
	Shape source_shape;
	std::vector<std::size_t> argmax;
};

struct MaxPoolResult {
	Tensor output;
	PoolIndices indices;
};

/// Per-channel max over window x window cells; ties go to the lowest flat index.
inline MaxPoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
	require_rank(input, 3, "maxpool_forward");
	const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t OH = detail::conv_out_extent(H, window, stride, "maxpool_forward");
	const std::size_t OW = detail::conv_out_extent(W, window, stride, "maxpool_forward");
	MaxPoolResult r{Tensor({C, OH, OW}), PoolIndices{input.shape(), {}}};
	r.indices.argmax.resize(C * OH * OW);
	const double* in = input.data();
	std::size_t o = 0;
	for (std::size_t c = 0; c < C; ++c)
		for (std::size_t oy = 0; oy < OH; ++oy)
			for (std::size_t ox = 0; ox < OW; ++ox, ++o) {
				std::size_t best = (c * H + oy * stride) * W + ox * stride;
				for (std::size_t u = 0; u < window; ++u)
					for (std::size_t v = 0; v < window; ++v) {
						const std::size_t idx = (c * H + oy * stride + u) * W + ox * stride + v;
						if (in[idx] > in[best]) best = idx;
					}
				r.output[o] = in[best];
				r.indices.argmax[o] = best;
			}
	return r;
}

inline Tensor maxpool_backward(const PoolIndices& indices, const Tensor& grad_out) {
	if (indices.argmax.size() != grad_out.size())
		throw ShapeError("maxpool_backward: " + std::to_string(indices.argmax.size()) + " indices for " +
		                 std::to_string(grad_out.size()) + " gradient cells");
	Tensor g(indices.source_shape);
	for (std::size_t i = 0; i < grad_out.size(); ++i) {
		const std::size_t idx = indices.argmax[i];
		if (idx >= g.size())
			throw std::out_of_range("maxpool_backward: index " + std::to_string(idx) + " outside source " +
			                        shape_str(indices.source_shape));
		g[idx] += grad_out[i];
	}
	return g;
}

// ---------------------------------------------------------------------------
// Subspace (ISA-style) L2 pooling over channel groups

inline constexpr double kSubspaceSmoothing = 1e-12;

/// input [F,H,W] -> [F/g,H,W]; out[m] = sqrt(sum of squares over channels m*g .. m*g+g-1).
inline Tensor subspace_pool_forward(const Tensor& input, std::size_t group_size) {
	require_rank(input, 3, "subspace_pool_forward");
	const std::size_t F = input.dim(0), HW = input.dim(1) * input.dim(2);
	if (group_size == 0 || F % group_size != 0)
		throw ShapeError("subspace_pool_forward: channel count " + std::to_string(F) +
		                 " is not divisible by group size " + std::to_string(group_size));
	const std::size_t M = F / group_size;
	Tensor out({M, input.dim(1), input.dim(2)});
	for (std::size_t m = 0; m < M; ++m)
		for (std::size_t p = 0; p < HW; ++p) {
			double s = 0.0;
			for (std::size_t j = 0; j < group_size; ++j) {
				const double v = input[(m * group_size + j) * HW + p];
				s += v * v;
			}
			out[m * HW + p] = std::sqrt(s);
		}
	return out;
}

/// Gradient uses sqrt(sum + 1e-12) in the denominator so exact zeros stay finite.
inline Tensor subspace_pool_backward(const Tensor& input, std::size_t group_size, const Tensor& grad_out) {
	require_rank(input, 3, "subspace_pool_backward");
	const std::size_t F = input.dim(0), HW = input.dim(1) * input.dim(2);
	if (group_size == 0 || F % group_size != 0)
		throw ShapeError("subspace_pool_backward: channel count not divisible by group size");
	const std::size_t M = F / group_size;
	if (grad_out.shape() != Shape{M, input.dim(1), input.dim(2)})
		throw ShapeError("subspace_pool_backward: grad_out shape " + shape_str(grad_out.shape()) + " mismatch");
	Tensor g = Tensor::zeros_like(input);
	for (std::size_t m = 0; m < M; ++m)
		for (std::size_t p = 0; p < HW; ++p) {
			double s = 0.0;
			for (std::size_t j = 0; j < group_size; ++j) {
				const double v = input[(m * group_size + j) * HW + p];
				s += v * v;
			}
			const double scale = grad_out[m * HW + p] / std::sqrt(s + kSubspaceSmoothing);
			for (std::size_t j = 0; j < group_size; ++j) {
				const std::size_t idx = (m * group_size + j) * HW + p;
				g[idx] = input[idx] * scale;
			}
		}
	return g;
}

// ---------------------------------------------------------------------------
// Dense

struct DenseGrads {
	std::vector<double> input;
	Tensor weights;
	std::vector<double> bias;
};

/// y = W x + b with W [out,in].
inline std::vector<double> dense_forward(std::span<const double> x, const Tensor& weights,
                                         std::span<const double> bias) {
	require_rank(weights, 2, "dense_forward weights");
	const std::size_t O = weights.dim(0), I = weights.dim(1);
	if (x.size() != I)
		throw ShapeError("dense_forward: input length " + std::to_string(x.size()) + " != weight columns " +
		                 std::to_string(I));
	if (bias.size() != O) throw ShapeError("dense_forward: bias length mismatch");
	std::vector<double> y(O);
	const double* w = weights.data();
	for (std::size_t o = 0; o < O; ++o) {
		const double* row = w + o * I;
		double acc = 0.0;
		for (std::size_t i = 0; i < I; ++i) acc += row[i] * x[i];
		y[o] = acc + bias[o];
	}
	return y;
}

inline DenseGrads dense_backward(std::span<const double> x, const Tensor& weights, std::span<const double> grad_out) {
	require_rank(weights, 2, "dense_backward weights");
	const std::size_t O = weights.dim(0), I = weights.dim(1);
	if (x.size() != I || grad_out.size() != O) throw ShapeError("dense_backward: shape mismatch");
	DenseGrads g{std::vector<double>(I, 0.0), Tensor::zeros_like(weights), {grad_out.begin(), grad_out.end()}};
	const double* w = weights.data();
	double* gw = g.weights.data();
	for (std::size_t o = 0; o < O; ++o) {
		const double go = grad_out[o];
		const double* row = w + o * I;
		double* grow = gw + o * I;
		for (std::size_t i = 0; i < I; ++i) {
			grow[i] = go * x[i];
			g.input[i] += go * row[i];
		}
	}
	return g;
}

/// Adds dW and db into grad_weights / grad_bias and returns dx. Used by the
/// training loop to avoid materialising a weight-sized gradient per sample.
inline std::vector<double> dense_backward_accumulate(std::span<const double> x, const Tensor& weights,
                                                     std::span<const double> grad_out, Tensor& grad_weights,
                                                     std::span<double> grad_bias) {
	require_rank(weights, 2, "dense_backward weights");
	const std::size_t O = weights.dim(0), I = weights.dim(1);
	if (x.size() != I || grad_out.size() != O || grad_bias.size() != O || grad_weights.shape() != weights.shape())
		throw ShapeError("dense_backward: shape mismatch");
	std::vector<double> gx(I, 0.0);
	const double* w = weights.data();
	double* gw = grad_weights.data();
	for (std::size_t o = 0; o < O; ++o) {
		const double go = grad_out[o];
		grad_bias[o] += go;
		if (go == 0.0) continue;
		const double* row = w + o * I;
		double* grow = gw + o * I;
		for (std::size_t i = 0; i < I; ++i) {
			grow[i] += go * x[i];
			gx[i] += go * row[i];
		}
	}
	return gx;
}

// ---------------------------------------------------------------------------
// Activations

inline double sigmoid(double x) {
	if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
	const double e = std::exp(x);
	return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
	Tensor y = x;
	for (double& v : y.values()) v = sigmoid(v);
	return y;
}

inline std::vector<double> sigmoid(std::span<const double> x) {
	std::vector<double> y(x.begin(), x.end());
	for (double& v : y) v = sigmoid(v);
	return y;
}

/// Backward through sigmoid given its output y.
inline Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
	Tensor::require_same_shape(y, grad_out, "sigmoid_backward");
	Tensor g = grad_out;
	for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
	return g;
}

inline std::vector<double> sigmoid_backward(std::span<const double> y, std::span<const double> grad_out) {
	if (y.size() != grad_out.size()) throw ShapeError("sigmoid_backward: length mismatch");
	std::vector<double> g(y.size());
	for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * y[i] * (1.0 - y[i]);
	return g;
}

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
	if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
	double mx = logits[0];
	for (double v : logits) mx = std::max(mx, v);
	std::vector<double> p(logits.size());
	double z = 0.0;
	for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
	for (double& v : p) v /= z;
	return p;
}

/// Jacobian-vector product of softmax: dL/dz_k = p_k (g_k - sum_j g_j p_j).
inline std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> grad_probs) {
	if (probs.size() != grad_probs.size()) throw ShapeError("softmax_backward: length mismatch");
	double dot = 0.0;
	for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_probs[i];
	std::vector<double> g(probs.size());
	for (std::size_t i = 0; i < g.size(); ++i) g[i] = probs[i] * (grad_probs[i] - dot);
	return g;
}

} // namespace mir

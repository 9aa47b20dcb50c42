#pragma once

// Convolutional autoencoder with a dense SoftMax classifier head.
//
//   encoder:    conv(k, F) -> sigmoid -> pool
//   decoder:    deconv -> sigmoid            (reconstruction, same shape as the target)
//   classifier: flatten(reconstruction) -> dense(hidden) -> sigmoid -> dense(classes) -> softmax
//
// Pool modes:
//   max   2x2 stride-2 max pooling on the gray patch
//   risa  channel-group L2 (subspace) pooling, scaled by 1/sqrt(g) to stay in (0,1)
//   mir   max pooling, with the 3-channel multispace image as input and target
//
// The decoder's transposed convolution uses the pool stride and whatever kernel
// size restores the input side exactly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "layers.hpp"
#include "multispace.hpp"
#include "objective.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace mir {

enum class PoolMode { max, risa, mir };

inline const char* to_string(PoolMode m) {
	switch (m) {
	case PoolMode::max: return "max";
	case PoolMode::risa: return "risa";
	case PoolMode::mir: return "mir";
	}
	return "?";
}

inline PoolMode parse_pool_mode(const std::string& s) {
	if (s == "max") return PoolMode::max;
	if (s == "risa") return PoolMode::risa;
	if (s == "mir") return PoolMode::mir;
	throw std::invalid_argument("unknown pool mode '" + s + "' (expected max|risa|mir)");
}

struct NetworkConfig {
	std::size_t input_size = 32;
	std::size_t window = 3;
	std::size_t filters = 8;
	PoolMode pool_mode = PoolMode::max;
	std::size_t pool_window = 2;
	std::size_t pool_stride = 2;
	std::size_t group_size = 2;
	std::size_t classifier_hidden = 256;
	std::size_t classes = 3;
	std::uint64_t seed = 42;
	GlcmParams glcm{};

	friend bool operator==(const NetworkConfig& a, const NetworkConfig& b) {
		return a.input_size == b.input_size && a.window == b.window && a.filters == b.filters &&
		       a.pool_mode == b.pool_mode && a.pool_window == b.pool_window && a.pool_stride == b.pool_stride &&
		       a.group_size == b.group_size && a.classifier_hidden == b.classifier_hidden && a.classes == b.classes &&
		       a.seed == b.seed && a.glcm.window == b.glcm.window && a.glcm.levels == b.glcm.levels &&
		       a.glcm.dy == b.glcm.dy && a.glcm.dx == b.glcm.dx;
	}
};

/// Layer extents implied by a config.
struct Geometry {
	std::size_t channels;       ///< input / reconstruction channels (1 or 3)
	std::size_t conv_side;      ///< encoder conv output side
	std::size_t code_channels;  ///< channels after pooling
	std::size_t code_side;      ///< spatial side after pooling
	std::size_t dec_kernel;     ///< transposed-conv kernel side
	std::size_t dec_stride;
	std::size_t flat;           ///< classifier input length
};

inline Geometry geometry(const NetworkConfig& c) {
	auto bad = [](const std::string& why) { return std::invalid_argument("invalid network config: " + why); };
	if (c.window < 3 || c.window > 5) throw bad("window must be 3, 4 or 5, got " + std::to_string(c.window));
	if (c.classes < 2) throw bad("classes must be >= 2");
	if (c.classifier_hidden < c.classes) throw bad("classifier_hidden must be >= classes");
	if (c.filters == 0) throw bad("filters must be >= 1");
	if (c.input_size < c.window + 1) throw bad("input_size too small for the convolution window");
	if (c.pool_mode == PoolMode::mir && c.input_size < 3) throw bad("mir mode needs input_size >= 3");

	Geometry g{};
	g.channels = c.pool_mode == PoolMode::mir ? 3 : 1;
	g.conv_side = c.input_size - c.window + 1;
	if (c.pool_mode == PoolMode::risa) {
		if (c.group_size == 0 || c.filters % c.group_size != 0)
			throw bad("filters (" + std::to_string(c.filters) + ") must be divisible by group_size (" +
			          std::to_string(c.group_size) + ")");
		g.code_channels = c.filters / c.group_size;
		g.code_side = g.conv_side;
		g.dec_stride = 1;
	} else {
		if (c.pool_window == 0 || c.pool_stride == 0 || c.pool_window > g.conv_side)
			throw bad("pool window/stride incompatible with conv output side " + std::to_string(g.conv_side));
		g.code_channels = c.filters;
		g.code_side = (g.conv_side - c.pool_window) / c.pool_stride + 1;
		g.dec_stride = c.pool_stride;
	}
	const std::size_t span = g.dec_stride * (g.code_side - 1);
	if (span >= c.input_size) throw bad("decoder cannot restore the input side");
	g.dec_kernel = c.input_size - span;
	g.flat = g.channels * c.input_size * c.input_size;
	return g;
}

inline void validate(const NetworkConfig& c) { (void)geometry(c); }

/// Parameter slots, in storage order.
enum Param : std::size_t {
	kEncKernel,
	kEncBias,
	kDecKernel,
	kDecBias,
	kHiddenWeight,
	kHiddenBias,
	kOutWeight,
	kOutBias,
	kParamCount
};

inline const std::vector<std::string>& param_names() {
	static const std::vector<std::string> names = {"enc.kernel", "enc.bias", "dec.kernel", "dec.bias",
	                                               "cls.hidden.weight", "cls.hidden.bias", "cls.out.weight", "cls.out.bias"};
	return names;
}

inline std::vector<Shape> param_shapes(const NetworkConfig& c) {
	const Geometry g = geometry(c);
	return {
	    {c.filters, g.channels, c.window, c.window},
	    {c.filters},
	    {g.code_channels, g.channels, g.dec_kernel, g.dec_kernel},
	    {g.channels},
	    {c.classifier_hidden, g.flat},
	    {c.classifier_hidden},
	    {c.classes, c.classifier_hidden},
	    {c.classes},
	};
}

struct Network {
	NetworkConfig config;
	std::vector<Tensor> params;

	const Tensor& param(Param p) const { return params[p]; }
	Tensor& param(Param p) { return params[p]; }

	std::size_t parameter_count() const {
		std::size_t n = 0;
		for (const Tensor& t : params) n += t.size();
		return n;
	}

	friend bool operator==(const Network&, const Network&) = default;
};

/// Glorot-uniform weights from the config seed, zero biases.
inline Network init_network(const NetworkConfig& config) {
	const std::vector<Shape> shapes = param_shapes(config);
	Network net{config, {}};
	Rng rng(config.seed);
	for (std::size_t p = 0; p < shapes.size(); ++p) {
		Tensor t(shapes[p]);
		if (t.rank() > 1) {
			std::size_t fan_in, fan_out;
			if (t.rank() == 4) {
				const std::size_t area = shapes[p][2] * shapes[p][3];
				// conv kernels are [out,in,k,k]; transposed-conv kernels are [in,out,k,k]
				const bool transposed = p == kDecKernel;
				fan_in = (transposed ? shapes[p][0] : shapes[p][1]) * area;
				fan_out = (transposed ? shapes[p][1] : shapes[p][0]) * area;
			} else {
				fan_in = shapes[p][1];
				fan_out = shapes[p][0];
			}
			const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
			for (double& v : t.values()) v = rng.uniform(-s, s);
		}
		net.params.push_back(std::move(t));
	}
	return net;
}

/// Network input (and reconstruction target) for a gray [1,n,n] patch.
inline Tensor network_input(const NetworkConfig& config, const Tensor& gray) {
	if (config.pool_mode == PoolMode::mir) return multispace_reconstruct(gray, config.glcm).stacked();
	return gray;
}

// ---------------------------------------------------------------------------
// Forward

struct AutoencodeCache {
	Tensor input;
	Tensor enc_act;          ///< sigmoid(conv)
	PoolIndices pool;        ///< max / mir only
	Tensor code;             ///< encoder activations fed to the decoder (in (0,1))
	Tensor reconstruction;   ///< sigmoid(deconv(code))
};

struct ClassifyCache {
	std::vector<double> hidden; ///< sigmoid hidden activations
	std::vector<double> probs;
};

inline AutoencodeCache forward_autoencode(const Network& net, const Tensor& input) {
	const NetworkConfig& c = net.config;
	const Geometry g = geometry(c);
	if (input.shape() != Shape{g.channels, c.input_size, c.input_size})
		throw ShapeError(std::string("forward_autoencode: ") + to_string(c.pool_mode) + " network expects input " +
		                 shape_str({g.channels, c.input_size, c.input_size}) + ", got " + shape_str(input.shape()));
	AutoencodeCache k;
	k.input = input;
	k.enc_act = sigmoid(conv2d_forward(input, net.param(kEncKernel), net.param(kEncBias).values(), 1));
	if (c.pool_mode == PoolMode::risa) {
		k.code = subspace_pool_forward(k.enc_act, c.group_size);
		k.code *= 1.0 / std::sqrt(static_cast<double>(c.group_size));
	} else {
		MaxPoolResult p = maxpool_forward(k.enc_act, c.pool_window, c.pool_stride);
		k.code = std::move(p.output);
		k.pool = std::move(p.indices);
	}
	k.reconstruction = sigmoid(deconv2d_forward(k.code, net.param(kDecKernel), net.param(kDecBias).values(), g.dec_stride));
	return k;
}

inline ClassifyCache forward_classify(const Network& net, const Tensor& reconstruction) {
	const Geometry g = geometry(net.config);
	if (reconstruction.size() != g.flat)
		throw ShapeError("forward_classify: reconstruction " + shape_str(reconstruction.shape()) + " has " +
		                 std::to_string(reconstruction.size()) + " values, classifier expects " + std::to_string(g.flat));
	ClassifyCache k;
	k.hidden = sigmoid(dense_forward(reconstruction.values(), net.param(kHiddenWeight), net.param(kHiddenBias).values()));
	k.probs = softmax(dense_forward(k.hidden, net.param(kOutWeight), net.param(kOutBias).values()));
	return k;
}

inline std::size_t argmax(std::span<const double> v) {
	std::size_t best = 0;
	for (std::size_t i = 1; i < v.size(); ++i)
		if (v[i] > v[best]) best = i;
	return best;
}

/// gray patch -> class probabilities.
inline std::vector<double> predict(const Network& net, const Tensor& gray) {
	return forward_classify(net, forward_autoencode(net, network_input(net.config, gray)).reconstruction).probs;
}

// ---------------------------------------------------------------------------
// Backward

inline std::vector<Tensor> zero_grads(const Network& net) {
	std::vector<Tensor> g;
	g.reserve(net.params.size());
	for (const Tensor& p : net.params) g.push_back(Tensor::zeros_like(p));
	return g;
}

/// Parameter gradients for one sample; accumulated into `grads` (aligned with net.params).
inline void backward(const Network& net, const AutoencodeCache& ae, const ClassifyCache& cls, const LossGrads& lg,
                     std::vector<Tensor>& grads) {
	const NetworkConfig& c = net.config;
	const Geometry g = geometry(c);
	if (grads.size() != net.params.size()) throw ShapeError("backward: gradient set does not match parameter set");
	if (ae.input.shape() != Shape{g.channels, c.input_size, c.input_size} ||
	    ae.reconstruction.shape() != ae.input.shape() || cls.probs.size() != c.classes ||
	    cls.hidden.size() != c.classifier_hidden)
		throw std::logic_error("backward: cache does not belong to this network configuration (stale cache)");
	if (lg.recon.shape() != ae.reconstruction.shape() || lg.code.shape() != ae.code.shape() ||
	    lg.probs.size() != cls.probs.size())
		throw ShapeError("backward: loss gradients do not match the cached forward pass");

	// classifier head
	const std::vector<double> d_logits = softmax_backward(cls.probs, lg.probs);
	const std::vector<double> d_hidden = dense_backward_accumulate(cls.hidden, net.param(kOutWeight), d_logits,
	                                                               grads[kOutWeight], grads[kOutBias].values());
	const std::vector<double> d_hidden_pre = sigmoid_backward(cls.hidden, d_hidden);
	const std::vector<double> d_flat = dense_backward_accumulate(ae.reconstruction.values(), net.param(kHiddenWeight),
	                                                             d_hidden_pre, grads[kHiddenWeight],
	                                                             grads[kHiddenBias].values());

	// decoder
	Tensor d_recon = lg.recon;
	if (lg.classifier_into_decoder)
		for (std::size_t i = 0; i < d_recon.size(); ++i) d_recon[i] += d_flat[i];
	const Tensor d_dec_pre = sigmoid_backward(ae.reconstruction, d_recon);
	Conv2dGrads dec = deconv2d_backward(ae.code, net.param(kDecKernel), g.dec_stride, d_dec_pre);
	grads[kDecKernel] += dec.kernels;
	for (std::size_t i = 0; i < dec.bias.size(); ++i) grads[kDecBias][i] += dec.bias[i];

	// pool + encoder
	Tensor d_code = std::move(dec.input);
	d_code += lg.code;
	Tensor d_act;
	if (c.pool_mode == PoolMode::risa) {
		d_code *= 1.0 / std::sqrt(static_cast<double>(c.group_size));
		d_act = subspace_pool_backward(ae.enc_act, c.group_size, d_code);
	} else {
		d_act = maxpool_backward(ae.pool, d_code);
	}
	const Tensor d_enc_pre = sigmoid_backward(ae.enc_act, d_act);
	Conv2dGrads enc = conv2d_backward(ae.input, net.param(kEncKernel), 1, d_enc_pre);
	grads[kEncKernel] += enc.kernels;
	for (std::size_t i = 0; i < enc.bias.size(); ++i) grads[kEncBias][i] += enc.bias[i];
}

inline std::vector<Tensor> backward(const Network& net, const AutoencodeCache& ae, const ClassifyCache& cls,
                                    const LossGrads& lg) {
	std::vector<Tensor> grads = zero_grads(net);
	backward(net, ae, cls, lg, grads);
	return grads;
}

} // namespace mir

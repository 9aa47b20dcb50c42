#pragma once

// Central finite-difference checks for every layer primitive and for the full
// autoencoder + classifier objective. Layer checks use a random linear
// projection of the output as the scalar loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "layers.hpp"
#include "network.hpp"
#include "objective.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace mir {

struct GradCheckOptions {
	double step = 1e-5;
	double rel_tol = 1e-4;
	/// Denominator floor of the relative error, so that gradients that are zero
	/// up to finite-difference noise are not scored as 100% wrong.
	double rel_floor = 1e-6;
	double min_pass_fraction = 0.99;
	std::size_t shapes = 20; ///< random shapes per layer primitive
};

struct GradCheckStats {
	std::string name;
	std::size_t checked = 0;
	std::size_t passed = 0;
	std::size_t excluded = 0; ///< max-pool tie-adjacent coordinates
	double max_rel_error = 0.0;

	double pass_fraction() const { return checked ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0; }
	bool ok(double min_fraction = 0.99) const { return checked > 0 && pass_fraction() >= min_fraction; }
};

inline double relative_error(double analytic, double numeric, double floor) {
	return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

inline void score(GradCheckStats& s, double analytic, double numeric, const GradCheckOptions& o) {
	const double e = relative_error(analytic, numeric, o.rel_floor);
	++s.checked;
	if (e < o.rel_tol) ++s.passed;
	s.max_rel_error = std::max(s.max_rel_error, e);
}

/// Central difference of f with respect to every coordinate of `values`, scored against `analytic`.
inline void check_coordinates(GradCheckStats& s, std::span<double> values, std::span<const double> analytic,
                              const std::function<double()>& f, const GradCheckOptions& o,
                              const std::vector<bool>* skip = nullptr) {
	for (std::size_t i = 0; i < values.size(); ++i) {
		if (skip && (*skip)[i]) {
			++s.excluded;
			continue;
		}
		const double orig = values[i];
		values[i] = orig + o.step;
		const double fp = f();
		values[i] = orig - o.step;
		const double fm = f();
		values[i] = orig;
		score(s, analytic[i], (fp - fm) / (2 * o.step), o);
	}
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
	Tensor t(std::move(shape));
	for (double& v : t.values()) v = rng.uniform(lo, hi);
	return t;
}

inline std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
	std::vector<double> v(n);
	for (double& x : v) x = rng.uniform(lo, hi);
	return v;
}

inline double project(std::span<const double> w, std::span<const double> y) {
	double s = 0.0;
	for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
	return s;
}

} // namespace detail

inline GradCheckStats gradcheck_conv2d(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"conv2d"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		const std::size_t C = 1 + rng.index(3), F = 1 + rng.index(3), k = 1 + rng.index(4), stride = 1 + rng.index(2);
		const std::size_t H = k + rng.index(5), W = k + rng.index(5);
		Tensor x = detail::random_tensor({C, H, W}, rng), K = detail::random_tensor({F, C, k, k}, rng);
		std::vector<double> b = detail::random_vec(F, rng);
		const Tensor y = conv2d_forward(x, K, b, stride);
		const Tensor w = detail::random_tensor(y.shape(), rng);
		const Conv2dGrads g = conv2d_backward(x, K, stride, w);
		auto f = [&] { return detail::project(w.values(), conv2d_forward(x, K, b, stride).values()); };
		detail::check_coordinates(s, x.values(), g.input.values(), f, o);
		detail::check_coordinates(s, K.values(), g.kernels.values(), f, o);
		detail::check_coordinates(s, b, g.bias, f, o);
	}
	return s;
}

inline GradCheckStats gradcheck_deconv2d(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"deconv2d"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		const std::size_t Ci = 1 + rng.index(3), Co = 1 + rng.index(3), k = 1 + rng.index(4), stride = 1 + rng.index(2);
		const std::size_t H = 1 + rng.index(5), W = 1 + rng.index(5);
		Tensor x = detail::random_tensor({Ci, H, W}, rng), K = detail::random_tensor({Ci, Co, k, k}, rng);
		std::vector<double> b = detail::random_vec(Co, rng);
		const Tensor y = deconv2d_forward(x, K, b, stride);
		const Tensor w = detail::random_tensor(y.shape(), rng);
		const Conv2dGrads g = deconv2d_backward(x, K, stride, w);
		auto f = [&] { return detail::project(w.values(), deconv2d_forward(x, K, b, stride).values()); };
		detail::check_coordinates(s, x.values(), g.input.values(), f, o);
		detail::check_coordinates(s, K.values(), g.kernels.values(), f, o);
		detail::check_coordinates(s, b, g.bias, f, o);
	}
	return s;
}

/// Input coordinates that are the max or runner-up of a window whose top two values are
/// closer than `gap`; perturbing those can switch the selected cell.
inline std::vector<bool> maxpool_tie_mask(const Tensor& x, std::size_t window, std::size_t stride, double gap) {
	const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
	const std::size_t OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
	std::vector<bool> mask(x.size(), false);
	for (std::size_t c = 0; c < C; ++c)
		for (std::size_t oy = 0; oy < OH; ++oy)
			for (std::size_t ox = 0; ox < OW; ++ox) {
				std::vector<std::pair<double, std::size_t>> cells;
				for (std::size_t u = 0; u < window; ++u)
					for (std::size_t v = 0; v < window; ++v) {
						const std::size_t idx = (c * H + oy * stride + u) * W + ox * stride + v;
						cells.emplace_back(x[idx], idx);
					}
				if (cells.size() < 2) continue;
				std::sort(cells.begin(), cells.end(), [](auto& a, auto& b) { return a.first > b.first; });
				if (cells[0].first - cells[1].first < gap) mask[cells[0].second] = mask[cells[1].second] = true;
			}
	return mask;
}

inline GradCheckStats gradcheck_maxpool(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"maxpool"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		const std::size_t C = 1 + rng.index(2), win = 1 + rng.index(3), stride = 1 + rng.index(2);
		const std::size_t H = win + rng.index(5), W = win + rng.index(5);
		Tensor x = detail::random_tensor({C, H, W}, rng);
		const MaxPoolResult y = maxpool_forward(x, win, stride);
		const Tensor w = detail::random_tensor(y.output.shape(), rng);
		const Tensor g = maxpool_backward(y.indices, w);
		const std::vector<bool> ties = maxpool_tie_mask(x, win, stride, std::max(1e-6, 2 * o.step));
		auto f = [&] { return detail::project(w.values(), maxpool_forward(x, win, stride).output.values()); };
		detail::check_coordinates(s, x.values(), g.values(), f, o, &ties);
	}
	return s;
}

inline GradCheckStats gradcheck_subspace_pool(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"subspace_pool"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		const std::size_t g = 1 + rng.index(3), F = g * (1 + rng.index(3));
		const std::size_t H = 1 + rng.index(4), W = 1 + rng.index(4);
		Tensor x = detail::random_tensor({F, H, W}, rng);
		const Tensor y = subspace_pool_forward(x, g);
		const Tensor w = detail::random_tensor(y.shape(), rng);
		const Tensor grad = subspace_pool_backward(x, g, w);
		auto f = [&] { return detail::project(w.values(), subspace_pool_forward(x, g).values()); };
		detail::check_coordinates(s, x.values(), grad.values(), f, o);
	}
	return s;
}

inline GradCheckStats gradcheck_dense(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"dense"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		const std::size_t I = 1 + rng.index(10), O = 1 + rng.index(6);
		std::vector<double> x = detail::random_vec(I, rng), b = detail::random_vec(O, rng), w = detail::random_vec(O, rng);
		Tensor Wt = detail::random_tensor({O, I}, rng);
		const DenseGrads g = dense_backward(x, Wt, w);
		auto f = [&] { return detail::project(w, dense_forward(x, Wt, b)); };
		detail::check_coordinates(s, x, g.input, f, o);
		detail::check_coordinates(s, Wt.values(), g.weights.values(), f, o);
		detail::check_coordinates(s, b, g.bias, f, o);
	}
	return s;
}

inline GradCheckStats gradcheck_sigmoid(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"sigmoid"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		std::vector<double> x = detail::random_vec(1 + rng.index(10), rng, -4.0, 4.0);
		const std::vector<double> w = detail::random_vec(x.size(), rng);
		const std::vector<double> g = sigmoid_backward(sigmoid(std::span<const double>(x)), w);
		auto f = [&] { return detail::project(w, sigmoid(std::span<const double>(x))); };
		detail::check_coordinates(s, x, g, f, o);
	}
	return s;
}

inline GradCheckStats gradcheck_softmax(std::uint64_t seed, const GradCheckOptions& o = {}) {
	GradCheckStats s{"softmax"};
	Rng rng(seed);
	for (std::size_t n = 0; n < o.shapes; ++n) {
		std::vector<double> z = detail::random_vec(2 + rng.index(5), rng, -3.0, 3.0);
		const std::vector<double> w = detail::random_vec(z.size(), rng);
		const std::vector<double> g = softmax_backward(softmax(z), w);
		auto f = [&] { return detail::project(w, softmax(z)); };
		detail::check_coordinates(s, z, g, f, o);
	}
	return s;
}

/// Small configuration used for whole-network checks.
inline NetworkConfig gradcheck_network_config(PoolMode mode, std::uint64_t seed) {
	NetworkConfig c;
	c.input_size = 16;
	c.window = 3;
	c.filters = 4;
	c.pool_mode = mode;
	c.classifier_hidden = 16;
	c.classes = 3;
	c.seed = seed;
	return c;
}

/// Full autoencoder + classifier graph on a batch of two random patches. In enhanced mode the
/// scalar is EML; in classic mode autoencoder parameters are checked against L and classifier
/// parameters against the head's cross-entropy -RL. `with_prev` supplies stored previous outputs.
inline GradCheckStats gradcheck_network(PoolMode mode, ObjectiveMode objective, bool with_prev, std::uint64_t seed,
                                        const GradCheckOptions& o = {}) {
	GradCheckStats s{std::string("network/") + to_string(mode) + "/" + to_string(objective) + (with_prev ? "/prev" : "/first")};
	Rng rng(seed);
	Network net = init_network(gradcheck_network_config(mode, seed));
	const double lambda_s = 0.5;
	const std::size_t B = 2;
	std::vector<Tensor> inputs, prevs;
	std::vector<std::size_t> labels;
	for (std::size_t b = 0; b < B; ++b) {
		const Tensor gray = detail::random_tensor({1, 16, 16}, rng, 0.0, 1.0);
		inputs.push_back(network_input(net.config, gray));
		prevs.push_back(detail::random_tensor(inputs.back().shape(), rng, 0.0, 1.0));
		labels.push_back(rng.index(3));
	}

	struct Pass {
		std::vector<AutoencodeCache> ae;
		std::vector<ClassifyCache> cls;
		BatchObjective obj;
	};
	auto run = [&]() {
		Pass p;
		p.ae.resize(B);
		p.cls.resize(B);
		std::vector<SampleTerms> terms(B);
		for (std::size_t b = 0; b < B; ++b) {
			p.ae[b] = forward_autoencode(net, inputs[b]);
			p.cls[b] = forward_classify(net, p.ae[b].reconstruction);
			terms[b] = SampleTerms{&p.ae[b].reconstruction, &inputs[b], with_prev ? &prevs[b] : nullptr, &p.ae[b].code,
			                       p.cls[b].probs, {}, labels[b]};
		}
		p.obj = loss_backward(objective, terms, lambda_s);
		return p;
	};

	const Pass base = run();
	std::vector<Tensor> grads = zero_grads(net);
	for (std::size_t b = 0; b < B; ++b) backward(net, base.ae[b], base.cls[b], base.obj.grads[b], grads);

	for (std::size_t p = 0; p < net.params.size(); ++p) {
		const bool head = p >= kHiddenWeight;
		auto f = [&] {
			const LossReport r = run().obj.report;
			if (objective == ObjectiveMode::enhanced) return r.EML;
			return head ? -r.RL : r.L;
		};
		detail::check_coordinates(s, net.params[p].values(), grads[p].values(), f, o);
	}
	return s;
}

/// Every layer primitive plus the whole network in all pool and objective modes.
inline std::vector<GradCheckStats> gradcheck_all(std::uint64_t seed, const GradCheckOptions& o = {}) {
	std::vector<GradCheckStats> out;
	out.push_back(gradcheck_conv2d(derive_seed(seed, 1), o));
	out.push_back(gradcheck_deconv2d(derive_seed(seed, 2), o));
	out.push_back(gradcheck_maxpool(derive_seed(seed, 3), o));
	out.push_back(gradcheck_subspace_pool(derive_seed(seed, 4), o));
	out.push_back(gradcheck_dense(derive_seed(seed, 5), o));
	out.push_back(gradcheck_sigmoid(derive_seed(seed, 6), o));
	out.push_back(gradcheck_softmax(derive_seed(seed, 7), o));
	std::uint64_t stream = 100;
	for (PoolMode m : {PoolMode::max, PoolMode::risa, PoolMode::mir})
		for (ObjectiveMode obj : {ObjectiveMode::classic, ObjectiveMode::enhanced})
			for (bool prev : {false, true}) out.push_back(gradcheck_network(m, obj, prev, derive_seed(seed, stream++), o));
	return out;
}

} // namespace mir

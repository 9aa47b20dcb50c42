#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mir {

struct AdamConfig {
	double alpha = 0.001;
	double phi1 = 0.9;
	double phi2 = 0.999;
	double epsilon = 1e-8;
};

struct AdamState {
	AdamConfig cfg;
	std::uint64_t t = 0;
	std::vector<Tensor> m; ///< first moment, one per parameter tensor
	std::vector<Tensor> v; ///< second moment
};

inline void validate(const AdamConfig& c) {
	if (!(c.phi1 >= 0.0 && c.phi1 < 1.0)) throw std::invalid_argument("adam: phi1 must lie in [0,1), got " + std::to_string(c.phi1));
	if (!(c.phi2 >= 0.0 && c.phi2 < 1.0)) throw std::invalid_argument("adam: phi2 must lie in [0,1), got " + std::to_string(c.phi2));
	if (!(c.alpha > 0.0) || !std::isfinite(c.alpha)) throw std::invalid_argument("adam: alpha must be positive");
	if (!(c.epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
}

inline AdamState adam_init(std::span<const Tensor> params, const AdamConfig& cfg = {}) {
	validate(cfg);
	AdamState s{cfg, 0, {}, {}};
	s.m.reserve(params.size());
	s.v.reserve(params.size());
	for (const Tensor& p : params) {
		s.m.push_back(Tensor::zeros_like(p));
		s.v.push_back(Tensor::zeros_like(p));
	}
	return s;
}

/// One Adam update in place. Returns the max-norm of the parameter change.
inline double adam_step(AdamState& s, std::span<Tensor> params, std::span<const Tensor> grads) {
	if (params.size() != s.m.size() || grads.size() != params.size())
		throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) +
		                 " parameters (state holds " + std::to_string(s.m.size()) + ")");
	for (std::size_t k = 0; k < params.size(); ++k) {
		Tensor::require_same_shape(params[k], grads[k], "adam_step");
		Tensor::require_same_shape(params[k], s.m[k], "adam_step state");
	}
	if (s.t == std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error("adam_step: timestep overflow");

	s.t += 1;
	const auto& c = s.cfg;
	const double t = static_cast<double>(s.t);
	const double c1 = 1.0 - std::pow(c.phi1, t);
	const double c2 = 1.0 - std::pow(c.phi2, t);
	double max_delta = 0.0;
	for (std::size_t k = 0; k < params.size(); ++k) {
		double* th = params[k].data();
		const double* g = grads[k].data();
		double* m = s.m[k].data();
		double* v = s.v[k].data();
		for (std::size_t i = 0, n = params[k].size(); i < n; ++i) {
			m[i] = c.phi1 * m[i] + (1.0 - c.phi1) * g[i];
			v[i] = c.phi2 * v[i] + (1.0 - c.phi2) * (g[i] * g[i]);
			const double m_hat = m[i] / c1;
			const double v_hat = v[i] / c2;
			const double before = th[i];
			th[i] = th[i] - c.alpha * m_hat / (std::sqrt(v_hat) + c.epsilon);
			max_delta = std::max(max_delta, std::abs(th[i] - before));
		}
	}
	return max_delta;
}

/// True once the max-norm of the last update drops below tol.
inline bool adam_converged(const AdamState&, double params_delta_max_norm, double tol) {
	return params_delta_max_norm < tol;
}

inline bool adam_converged(const AdamState& s, std::span<const Tensor> params_delta, double tol) {
	double m = 0.0;
	for (const Tensor& d : params_delta) m = std::max(m, d.max_abs());
	return adam_converged(s, m, tol);
}

} // namespace mir

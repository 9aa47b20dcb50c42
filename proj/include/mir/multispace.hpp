#pragma once

// Multispace image: gradient magnitude, sliding-window GLCM energy and LBP
// code map of a grayscale patch, each scaled to [0,1]. All three use
// replicate padding so the output keeps the input's extent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mir {

struct GlcmParams {
	std::size_t window = 5;
	std::size_t levels = 8;
	int dy = 0;
	int dx = 1;
};

struct MultispaceImage {
	Tensor gradient;
	Tensor glcm;
	Tensor lbp;

	/// Channels stacked as [3,H,W] in the order gradient, glcm, lbp.
	Tensor stacked() const {
		const std::size_t H = gradient.dim(1), W = gradient.dim(2), HW = H * W;
		Tensor out({3, H, W});
		std::copy_n(gradient.data(), HW, out.data());
		std::copy_n(glcm.data(), HW, out.data() + HW);
		std::copy_n(lbp.data(), HW, out.data() + 2 * HW);
		return out;
	}
};

namespace detail {

inline void require_gray(const Tensor& gray, std::size_t min_side, const char* what) {
	if (gray.rank() != 3 || gray.dim(0) != 1)
		throw ShapeError(std::string(what) + ": expected a [1,H,W] grayscale tensor, got " + shape_str(gray.shape()));
	if (gray.dim(1) < min_side || gray.dim(2) < min_side)
		throw ShapeError(std::string(what) + ": image " + shape_str(gray.shape()) + " smaller than " +
		                 std::to_string(min_side) + "x" + std::to_string(min_side));
}

inline std::size_t clamp_index(long i, std::size_t n) {
	if (i < 0) return 0;
	if (static_cast<std::size_t>(i) >= n) return n - 1;
	return static_cast<std::size_t>(i);
}

/// Replicate-padded read of a [1,H,W] tensor.
inline double pixel(const Tensor& g, long y, long x) {
	const std::size_t H = g.dim(1), W = g.dim(2);
	return g[clamp_index(y, H) * W + clamp_index(x, W)];
}

} // namespace detail

inline constexpr double kSobelMax = 5.656854249492380195; // 4 * sqrt(2)

/// Sobel magnitude divided by its theoretical maximum 4*sqrt(2).
inline Tensor gradient_channel(const Tensor& gray) {
	detail::require_gray(gray, 3, "gradient_channel");
	const long H = static_cast<long>(gray.dim(1)), W = static_cast<long>(gray.dim(2));
	Tensor out(gray.shape());
	for (long y = 0; y < H; ++y)
		for (long x = 0; x < W; ++x) {
			auto p = [&](long dy, long dx) { return detail::pixel(gray, y + dy, x + dx); };
			const double gx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
			const double gy = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
			out[static_cast<std::size_t>(y * W + x)] = std::sqrt(gx * gx + gy * gy) / kSobelMax;
		}
	return out;
}

/// Gray level in [0,1] to bin floor(g * levels), clamped to [0, levels-1].
inline std::size_t quantize_level(double g, std::size_t levels) {
	const double q = std::floor(g * static_cast<double>(levels));
	if (q <= 0.0) return 0;
	return std::min(static_cast<std::size_t>(q), levels - 1);
}

/// Energy (sum of squared normalized entries) of the co-occurrence matrix of a
/// rectangular block of quantized levels. Only pairs whose both ends fall
/// inside the block are counted.
inline double glcm_energy(const std::vector<std::size_t>& block, std::size_t rows, std::size_t cols,
                          std::size_t levels, int dy, int dx) {
	std::vector<std::size_t> counts(levels * levels, 0);
	std::size_t total = 0;
	for (std::size_t r = 0; r < rows; ++r)
		for (std::size_t c = 0; c < cols; ++c) {
			const long r2 = static_cast<long>(r) + dy, c2 = static_cast<long>(c) + dx;
			if (r2 < 0 || c2 < 0 || r2 >= static_cast<long>(rows) || c2 >= static_cast<long>(cols)) continue;
			++counts[block[r * cols + c] * levels + block[static_cast<std::size_t>(r2) * cols + static_cast<std::size_t>(c2)]];
			++total;
		}
	if (total == 0) throw std::invalid_argument("glcm_energy: offset leaves no pixel pairs inside the window");
	double e = 0.0;
	const double n = static_cast<double>(total);
	for (std::size_t k : counts) {
		const double p = static_cast<double>(k) / n;
		e += p * p;
	}
	return e;
}

/// Per-pixel GLCM energy over a window centred on each pixel.
inline Tensor glcm_window_statistic(const Tensor& gray, const GlcmParams& params = {}) {
	detail::require_gray(gray, 1, "glcm_window_statistic");
	if (params.window % 2 == 0)
		throw std::invalid_argument("glcm_window_statistic: window must be odd, got " + std::to_string(params.window));
	if (params.levels < 2)
		throw std::invalid_argument("glcm_window_statistic: levels must be >= 2, got " + std::to_string(params.levels));
	if (static_cast<std::size_t>(std::abs(params.dy)) >= params.window ||
	    static_cast<std::size_t>(std::abs(params.dx)) >= params.window)
		throw std::invalid_argument("glcm_window_statistic: offset does not fit inside the window");

	const long H = static_cast<long>(gray.dim(1)), W = static_cast<long>(gray.dim(2));
	const long half = static_cast<long>(params.window / 2);
	const std::size_t win = params.window;

	std::vector<std::size_t> q(gray.size());
	for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantize_level(gray[i], params.levels);

	Tensor out(gray.shape());
	std::vector<std::size_t> block(win * win);
	for (long y = 0; y < H; ++y)
		for (long x = 0; x < W; ++x) {
			for (std::size_t r = 0; r < win; ++r)
				for (std::size_t c = 0; c < win; ++c) {
					const std::size_t yy = detail::clamp_index(y - half + static_cast<long>(r), gray.dim(1));
					const std::size_t xx = detail::clamp_index(x - half + static_cast<long>(c), gray.dim(2));
					block[r * win + c] = q[yy * gray.dim(2) + xx];
				}
			out[static_cast<std::size_t>(y * W + x)] =
			    glcm_energy(block, win, win, params.levels, params.dy, params.dx);
		}
	return out;
}

/// 8-neighbour LBP code / 255. Neighbours run clockwise from the top-left,
/// which is the most significant bit; a bit is set when neighbour >= centre.
inline Tensor lbp_channel(const Tensor& gray) {
	detail::require_gray(gray, 3, "lbp_channel");
	static constexpr int ring[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}};
	const long H = static_cast<long>(gray.dim(1)), W = static_cast<long>(gray.dim(2));
	Tensor out(gray.shape());
	for (long y = 0; y < H; ++y)
		for (long x = 0; x < W; ++x) {
			const double centre = gray[static_cast<std::size_t>(y * W + x)];
			unsigned code = 0;
			for (const auto& d : ring) code = (code << 1) | (detail::pixel(gray, y + d[0], x + d[1]) >= centre ? 1u : 0u);
			out[static_cast<std::size_t>(y * W + x)] = static_cast<double>(code) / 255.0;
		}
	return out;
}

inline MultispaceImage multispace_reconstruct(const Tensor& gray, const GlcmParams& glcm = {}) {
	return MultispaceImage{gradient_channel(gray), glcm_window_statistic(gray, glcm), lbp_channel(gray)};
}

} // namespace mir

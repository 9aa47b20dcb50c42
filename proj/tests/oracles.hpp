#pragma once

// Reference re-computations used by the tests. Written directly from the channel
// definitions with explicit padding and counting; they share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace oracle {

using Image = std::vector<std::vector<double>>;

inline Image pad_replicate(const Image& img, int p) {
	const int H = static_cast<int>(img.size()), W = static_cast<int>(img[0].size());
	Image out(H + 2 * p, std::vector<double>(W + 2 * p));
	for (int y = 0; y < H + 2 * p; ++y)
		for (int x = 0; x < W + 2 * p; ++x)
			out[y][x] = img[std::clamp(y - p, 0, H - 1)][std::clamp(x - p, 0, W - 1)];
	return out;
}

inline Image sobel(const Image& img) {
	static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
	static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
	const Image P = pad_replicate(img, 1);
	Image out(img.size(), std::vector<double>(img[0].size()));
	for (std::size_t y = 0; y < img.size(); ++y)
		for (std::size_t x = 0; x < img[0].size(); ++x) {
			double gx = 0, gy = 0;
			for (int i = 0; i < 3; ++i)
				for (int j = 0; j < 3; ++j) {
					gx += kx[i][j] * P[y + i][x + j];
					gy += ky[i][j] * P[y + i][x + j];
				}
			out[y][x] = std::hypot(gx, gy) / (4.0 * std::sqrt(2.0));
		}
	return out;
}

inline int level(double g, int levels) { return std::clamp(static_cast<int>(std::floor(g * levels)), 0, levels - 1); }

inline Image glcm_energy_map(const Image& img, int window, int levels, int dy, int dx) {
	const int half = window / 2;
	const Image P = pad_replicate(img, half);
	Image out(img.size(), std::vector<double>(img[0].size()));
	for (int y = 0; y < static_cast<int>(img.size()); ++y)
		for (int x = 0; x < static_cast<int>(img[0].size()); ++x) {
			std::map<std::pair<int, int>, int> counts;
			int total = 0;
			for (int r = 0; r < window; ++r)
				for (int c = 0; c < window; ++c) {
					const int r2 = r + dy, c2 = c + dx;
					if (r2 < 0 || r2 >= window || c2 < 0 || c2 >= window) continue;
					++counts[{level(P[y + r][x + c], levels), level(P[y + r2][x + c2], levels)}];
					++total;
				}
			double e = 0;
			for (const auto& [pair, n] : counts) e += (static_cast<double>(n) / total) * (static_cast<double>(n) / total);
			out[y][x] = e;
		}
	return out;
}

inline Image lbp(const Image& img) {
	// clockwise from the top-left neighbour; top-left carries weight 128
	static const int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
	static const int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
	static const int weight[8] = {128, 64, 32, 16, 8, 4, 2, 1};
	const Image P = pad_replicate(img, 1);
	Image out(img.size(), std::vector<double>(img[0].size()));
	for (std::size_t y = 0; y < img.size(); ++y)
		for (std::size_t x = 0; x < img[0].size(); ++x) {
			int code = 0;
			for (int n = 0; n < 8; ++n)
				if (P[y + 1 + dy[n]][x + 1 + dx[n]] >= P[y + 1][x + 1]) code += weight[n];
			out[y][x] = code / 255.0;
		}
	return out;
}

/// Textbook Adam with bias correction, for a single scalar parameter.
struct ScalarAdam {
	double alpha = 0.001, phi1 = 0.9, phi2 = 0.999, eps = 1e-8;
	double m = 0, v = 0;
	long t = 0;
	double step(double theta, double g) {
		t += 1;
		m = phi1 * m + (1 - phi1) * g;
		v = phi2 * v + (1 - phi2) * g * g;
		const double mhat = m / (1 - std::pow(phi1, static_cast<double>(t)));
		const double vhat = v / (1 - std::pow(phi2, static_cast<double>(t)));
		return theta - alpha * mhat / (std::sqrt(vhat) + eps);
	}
};

} // namespace oracle

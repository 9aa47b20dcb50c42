#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mir {

// Engine draws are mapped to doubles by hand so that sequences are identical
// across standard library implementations (the std distributions are not).
class Rng {
  public:
	explicit Rng(std::uint64_t seed) : engine_(seed) {}

	/// Uniform in [0, 1) with 53 bits of precision.
	double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

	/// Uniform integer in [0, n); n must be > 0.
	std::uint64_t index(std::uint64_t n) {
		// rejection sampling removes modulo bias
		const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
		std::uint64_t r;
		do r = engine_();
		while (r >= limit);
		return r % n;
	}

	/// Standard normal via Box-Muller.
	double normal() {
		double u1 = uniform();
		while (u1 <= 0.0) u1 = uniform();
		const double u2 = uniform();
		return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
	}

	template <typename T>
	void shuffle(std::vector<T>& v) {
		for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
	}

  private:
	std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a master seed and a stream id (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
	std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (stream + 1);
	z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
	z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
	return z ^ (z >> 31);
}

} // namespace mir

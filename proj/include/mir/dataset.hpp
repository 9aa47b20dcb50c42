#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mir {

enum class Split { train, test };
enum class Provenance { synthetic, files };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline const char* to_string(Provenance p) { return p == Provenance::synthetic ? "synthetic" : "files"; }

inline Split parse_split(const std::string& s) {
	if (s == "train") return Split::train;
	if (s == "test") return Split::test;
	throw std::invalid_argument("unknown split '" + s + "' (expected train|test)");
}

struct Sample {
	Tensor patch; ///< gray [1,n,n] in [0,1]
	std::size_t label = 0;
	Split split = Split::train;
};

struct Dataset {
	std::vector<Sample> samples;
	std::size_t classes = 0;
	Provenance provenance = Provenance::synthetic;

	std::size_t count(Split s) const {
		std::size_t n = 0;
		for (const auto& x : samples) n += x.split == s;
		return n;
	}

	Dataset subset(Split s) const {
		Dataset d{{}, classes, provenance};
		for (const auto& x : samples)
			if (x.split == s) d.samples.push_back(x);
		return d;
	}

	std::size_t patch_side() const {
		if (samples.empty()) throw std::invalid_argument("dataset is empty");
		return samples.front().patch.dim(1);
	}

	/// Labels in range, square uniformly sized gray patches.
	void validate() const {
		if (classes < 2) throw std::invalid_argument("dataset: classes must be >= 2");
		if (samples.empty()) return;
		const Shape expect = samples.front().patch.shape();
		if (expect.size() != 3 || expect[0] != 1 || expect[1] != expect[2])
			throw ShapeError("dataset: patches must be square [1,n,n], got " + shape_str(expect));
		for (std::size_t i = 0; i < samples.size(); ++i) {
			if (samples[i].label >= classes)
				throw std::invalid_argument("dataset: sample " + std::to_string(i) + " has label " +
				                            std::to_string(samples[i].label) + " >= classes " + std::to_string(classes));
			if (samples[i].patch.shape() != expect)
				throw ShapeError("dataset: sample " + std::to_string(i) + " has shape " +
				                 shape_str(samples[i].patch.shape()) + ", expected " + shape_str(expect));
		}
	}
};

} // namespace mir

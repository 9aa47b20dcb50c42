#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mir {

/// Raised when tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
  public:
	using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
	std::ostringstream os;
	os << '[';
	for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
	os << ']';
	return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
	return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor of doubles. Extents are always >= 1.
class Tensor {
  public:
	Tensor() = default;

	explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
		validate_shape();
		data_.assign(shape_numel(shape_), fill);
	}

	Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
		validate_shape();
		if (shape_numel(shape_) != data_.size())
			throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
			                 shape_str(shape_));
	}

	static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

	const Shape& shape() const noexcept { return shape_; }
	std::size_t rank() const noexcept { return shape_.size(); }
	std::size_t dim(std::size_t i) const { return shape_.at(i); }
	std::size_t size() const noexcept { return data_.size(); }
	bool empty() const noexcept { return data_.empty(); }

	std::span<double> values() noexcept { return data_; }
	std::span<const double> values() const noexcept { return data_; }
	const std::vector<double>& vec() const noexcept { return data_; }
	double* data() noexcept { return data_.data(); }
	const double* data() const noexcept { return data_.data(); }

	double& operator[](std::size_t i) { return data_[i]; }
	double operator[](std::size_t i) const { return data_[i]; }

	// 3-d accessors for [C,H,W] tensors.
	double& at(std::size_t c, std::size_t h, std::size_t w) {
		return data_[(c * shape_[1] + h) * shape_[2] + w];
	}
	double at(std::size_t c, std::size_t h, std::size_t w) const {
		return data_[(c * shape_[1] + h) * shape_[2] + w];
	}

	Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

	bool all_finite() const {
		return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
	}

	double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

	double max_abs() const {
		double m = 0.0;
		for (double v : data_) m = std::max(m, std::abs(v));
		return m;
	}

	void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

	Tensor& operator+=(const Tensor& o) {
		require_same_shape(*this, o, "operator+=");
		for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
		return *this;
	}

	Tensor& operator*=(double s) {
		for (double& v : data_) v *= s;
		return *this;
	}

	friend bool operator==(const Tensor&, const Tensor&) = default;

	static void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
		if (a.shape_ != b.shape_)
			throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape_) + " vs " +
			                 shape_str(b.shape_));
	}

  private:
	void validate_shape() const {
		if (shape_.empty()) throw ShapeError("tensor shape must have at least one extent");
		for (std::size_t e : shape_)
			if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape_));
	}

	Shape shape_;
	std::vector<double> data_;
};

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
	if (t.rank() != rank)
		throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
		                 shape_str(t.shape()));
}

} // namespace mir

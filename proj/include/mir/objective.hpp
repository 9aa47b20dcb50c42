#pragma once

// Classic and enhanced autoencoder objectives.
//
//   classic:   L   = R + lambda_s * S
//   enhanced:  EML = MR + lambda_s * S,  MR = R1 - RL
//
// R is the squared reconstruction error, R1 the same error measured on the
// reconstruction stored from the previous training iteration (held constant),
// RL = sum_i y_i ln b_i the label log-probability of the classifier applied to
// the reconstruction, and S the mean entropy-like term -r ln r over encoder
// filter mean activations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mir {

enum class ObjectiveMode { classic, enhanced };

inline const char* to_string(ObjectiveMode m) { return m == ObjectiveMode::classic ? "classic" : "enhanced"; }

inline ObjectiveMode parse_objective_mode(const std::string& s) {
	if (s == "classic") return ObjectiveMode::classic;
	if (s == "enhanced") return ObjectiveMode::enhanced;
	throw std::invalid_argument("unknown objective mode '" + s + "' (expected classic|enhanced)");
}

inline constexpr double kLogClamp = 1e-12;

struct LossReport {
	ObjectiveMode mode = ObjectiveMode::enhanced;
	double R = 0.0;
	double R1 = 0.0;
	double RL = 0.0;
	double S = 0.0;
	double lambda_s = 0.0;
	double L = 0.0;
	double MR = 0.0;
	double EML = 0.0;
	/// Mean true-class probability of the classifier on the original (unreconstructed) target.
	/// Diagnostic only; takes no part in any objective.
	double original_true_prob = 0.0;

	/// The value being minimised in this mode.
	double objective() const { return mode == ObjectiveMode::classic ? L : EML; }
};

/// Fills L, MR and EML from the component terms.
inline LossReport compose_report(ObjectiveMode mode, double R, double R1, double RL, double S, double lambda_s) {
	LossReport r;
	r.mode = mode;
	r.R = R;
	r.R1 = R1;
	r.RL = RL;
	r.S = S;
	r.lambda_s = lambda_s;
	r.L = R + lambda_s * S;
	r.MR = R1 - RL;
	r.EML = r.MR + lambda_s * S;
	return r;
}

// ---------------------------------------------------------------------------
// Scalar terms

/// Sum of squared differences.
inline double reconstruction_R(const Tensor& x_out, const Tensor& x_in) {
	Tensor::require_same_shape(x_out, x_in, "reconstruction_R");
	double s = 0.0;
	for (std::size_t i = 0; i < x_out.size(); ++i) {
		const double d = x_out[i] - x_in[i];
		s += d * d;
	}
	return s;
}

/// R measured on the previous iteration's output; without one, falls back to R on x_out.
inline double reconstruction_R1(const Tensor* prev_out, const Tensor& x_out, const Tensor& x_in) {
	Tensor::require_same_shape(x_out, x_in, "reconstruction_R1");
	if (!prev_out) return reconstruction_R(x_out, x_in);
	Tensor::require_same_shape(*prev_out, x_in, "reconstruction_R1 (previous output)");
	return reconstruction_R(*prev_out, x_in);
}

/// Per-filter mean activation, r_j, over a batch of [M,H,W] activation maps; clamped to [eps,1].
inline std::vector<double> filter_means(std::span<const Tensor> activations, double eps = kLogClamp) {
	if (activations.empty()) throw std::invalid_argument("sparsity: empty activation batch");
	const Tensor& first = activations.front();
	require_rank(first, 3, "sparsity activations");
	const std::size_t M = first.dim(0), HW = first.dim(1) * first.dim(2);
	std::vector<double> r(M, 0.0);
	for (const Tensor& a : activations) {
		Tensor::require_same_shape(a, first, "sparsity activations");
		for (std::size_t j = 0; j < M; ++j)
			for (std::size_t p = 0; p < HW; ++p) r[j] += a[j * HW + p];
	}
	const double n = static_cast<double>(activations.size() * HW);
	for (double& v : r) v = std::clamp(v / n, eps, 1.0);
	return r;
}

/// S = (1/M) sum_j -r_j ln r_j given already-clamped means.
inline double sparsity_from_means(std::span<const double> r) {
	if (r.empty()) throw std::invalid_argument("sparsity: no filters");
	double s = 0.0;
	for (double v : r) s += -v * std::log(v);
	return s / static_cast<double>(r.size());
}

inline double sparsity_S(std::span<const Tensor> activations, double eps = kLogClamp) {
	return sparsity_from_means(filter_means(activations, eps));
}

inline double sparsity_S(const Tensor& activations, double eps = kLogClamp) {
	return sparsity_S(std::span<const Tensor>(&activations, 1), eps);
}

/// RL = sum_i y_i ln max(b_i, eps). Non-positive for probability vectors.
inline double reconstruction_loss_RL(std::span<const double> labels, std::span<const double> probs,
                                     double eps = kLogClamp) {
	if (labels.size() != probs.size())
		throw ShapeError("reconstruction_loss_RL: " + std::to_string(labels.size()) + " labels vs " +
		                 std::to_string(probs.size()) + " probabilities");
	double s = 0.0;
	for (std::size_t i = 0; i < probs.size(); ++i)
		if (labels[i] != 0.0) s += labels[i] * std::log(std::max(probs[i], eps));
	return s;
}

inline double classic_L(double R, double S, double lambda_s) { return R + lambda_s * S; }

inline double enhanced_EML(double R1, double RL, double S, double lambda_s) { return (R1 - RL) + lambda_s * S; }

inline std::vector<double> one_hot(std::size_t label, std::size_t classes) {
	if (label >= classes) throw std::out_of_range("one_hot: label " + std::to_string(label) + " >= " + std::to_string(classes));
	std::vector<double> y(classes, 0.0);
	y[label] = 1.0;
	return y;
}

// ---------------------------------------------------------------------------
// Gradients of the scalar terms

inline Tensor grad_R(const Tensor& x_out, const Tensor& x_in) {
	Tensor::require_same_shape(x_out, x_in, "grad_R");
	Tensor g = Tensor::zeros_like(x_out);
	for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (x_out[i] - x_in[i]);
	return g;
}

/// Zero when a previous output exists (it is treated as a constant).
inline Tensor grad_R1(const Tensor* prev_out, const Tensor& x_out, const Tensor& x_in) {
	if (prev_out) {
		Tensor::require_same_shape(x_out, x_in, "grad_R1");
		return Tensor::zeros_like(x_out);
	}
	return grad_R(x_out, x_in);
}

/// dRL/db_i = y_i / b_i, zero where the clamp is active.
inline std::vector<double> grad_RL(std::span<const double> labels, std::span<const double> probs,
                                   double eps = kLogClamp) {
	if (labels.size() != probs.size()) throw ShapeError("grad_RL: length mismatch");
	std::vector<double> g(probs.size(), 0.0);
	for (std::size_t i = 0; i < g.size(); ++i)
		if (probs[i] > eps) g[i] = labels[i] / probs[i];
	return g;
}

/// dS/dr_j = -(ln r_j + 1) / M, zero where r_j sits on the lower clamp.
inline std::vector<double> grad_S_means(std::span<const double> r, double eps = kLogClamp) {
	std::vector<double> g(r.size(), 0.0);
	const double M = static_cast<double>(r.size());
	for (std::size_t j = 0; j < r.size(); ++j)
		if (r[j] > eps) g[j] = -(std::log(r[j]) + 1.0) / M;
	return g;
}

// ---------------------------------------------------------------------------
// Batch-level objective

/// Gradient of the batch objective with respect to one sample's network outputs.
struct LossGrads {
	Tensor recon;              ///< direct term on the reconstruction (R or R1)
	std::vector<double> probs; ///< on the classifier probabilities
	Tensor code;               ///< on the encoder activations (sparsity)
	/// When false the classifier term updates only the classifier head and does
	/// not reach the autoencoder (classic mode trains the head separately).
	bool classifier_into_decoder = true;
};

/// Per-sample view of a batch handed to the objective.
struct SampleTerms {
	const Tensor* recon = nullptr;
	const Tensor* target = nullptr;
	const Tensor* prev_out = nullptr; ///< null on a sample's first iteration
	const Tensor* code = nullptr;
	std::span<const double> probs;
	std::span<const double> orig_probs; ///< optional diagnostic
	std::size_t label = 0;
};

struct BatchObjective {
	LossReport report;
	std::vector<LossGrads> grads;
};

/// Batch value: mean over samples of the per-sample R / R1 / RL, plus lambda_s * S
/// with S computed from batch-mean filter activations.
inline BatchObjective loss_backward(ObjectiveMode mode, std::span<const SampleTerms> batch, double lambda_s) {
	if (batch.empty()) throw std::invalid_argument("loss_backward: empty batch");
	const double B = static_cast<double>(batch.size());

	std::vector<Tensor> codes;
	codes.reserve(batch.size());
	for (const auto& s : batch) codes.push_back(*s.code);
	const std::vector<double> r = filter_means(codes);
	const double S = sparsity_from_means(r);
	const std::vector<double> dS = grad_S_means(r);
	const Tensor& c0 = codes.front();
	const std::size_t HW = c0.dim(1) * c0.dim(2);
	const double per_cell = 1.0 / (B * static_cast<double>(HW));

	double R = 0.0, R1 = 0.0, RL = 0.0, orig = 0.0;
	BatchObjective out;
	out.grads.reserve(batch.size());
	for (const auto& s : batch) {
		const std::vector<double> y = one_hot(s.label, s.probs.size());
		R += reconstruction_R(*s.recon, *s.target);
		R1 += reconstruction_R1(s.prev_out, *s.recon, *s.target);
		RL += reconstruction_loss_RL(y, s.probs);
		if (!s.orig_probs.empty()) orig += s.orig_probs[s.label];

		LossGrads g;
		g.recon = mode == ObjectiveMode::classic ? grad_R(*s.recon, *s.target) : grad_R1(s.prev_out, *s.recon, *s.target);
		g.recon *= 1.0 / B;
		g.probs = grad_RL(y, s.probs);
		for (double& v : g.probs) v *= -1.0 / B; // objective carries -RL
		g.code = Tensor::zeros_like(*s.code);
		for (std::size_t j = 0; j < r.size(); ++j)
			for (std::size_t p = 0; p < HW; ++p) g.code[j * HW + p] = lambda_s * dS[j] * per_cell;
		g.classifier_into_decoder = mode == ObjectiveMode::enhanced;
		out.grads.push_back(std::move(g));
	}
	out.report = compose_report(mode, R / B, R1 / B, RL / B, S, lambda_s);
	out.report.original_true_prob = orig / B;
	return out;
}

// ---------------------------------------------------------------------------
// Previous-iteration output store

/// Reconstructions from the previous training iteration, keyed by sample id.
class PrevOutputBuffer {
  public:
	const Tensor* find(std::size_t sample_id) const {
		auto it = entries_.find(sample_id);
		return it == entries_.end() ? nullptr : &it->second;
	}

	void store(std::size_t sample_id, Tensor recon) {
		auto it = entries_.find(sample_id);
		if (it != entries_.end()) {
			Tensor::require_same_shape(it->second, recon, "PrevOutputBuffer::store");
			it->second = std::move(recon);
		} else {
			entries_.emplace(sample_id, std::move(recon));
		}
	}

	void advance() { ++iteration_; }
	std::size_t iteration() const noexcept { return iteration_; }
	std::size_t size() const noexcept { return entries_.size(); }
	bool empty() const noexcept { return entries_.empty(); }
	void clear() {
		entries_.clear();
		iteration_ = 0;
	}

  private:
	std::map<std::size_t, Tensor> entries_;
	std::size_t iteration_ = 0;
};

} // namespace mir

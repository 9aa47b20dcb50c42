#include <gtest/gtest.h>

#include <cmath>

#include "mir/layers.hpp"
#include "mir/objective.hpp"
#include "mir/random.hpp"

using namespace mir;

namespace {

const double kE = std::exp(1.0);

Tensor random_tensor(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
	Tensor t(std::move(s));
	for (double& v : t.values()) v = rng.uniform(lo, hi);
	return t;
}

double fd(const std::function<double(double)>& f, double x, double h = 1e-6) { return (f(x + h) - f(x - h)) / (2 * h); }

} // namespace

TEST(Reconstruction, R) {
	const Tensor a({2}, {1, 2});
	EXPECT_EQ(reconstruction_R(a, a), 0.0);
	EXPECT_EQ(reconstruction_R(Tensor({2}), a), 5.0);
	Rng rng(1);
	const Tensor x = random_tensor({3, 4}, rng), y = random_tensor({3, 4}, rng);
	EXPECT_EQ(reconstruction_R(x, y), reconstruction_R(y, x));
	EXPECT_THROW(reconstruction_R(Tensor({3}), a), ShapeError);
}

TEST(Reconstruction, R1) {
	const Tensor in({1}, {1}), out({1}, {0.5}), prev({1}, {3});
	EXPECT_EQ(reconstruction_R1(&prev, out, in), 4.0);
	EXPECT_EQ(reconstruction_R1(&in, out, in), 0.0);
	EXPECT_EQ(reconstruction_R1(nullptr, out, in), reconstruction_R(out, in));
	EXPECT_EQ(grad_R1(&prev, out, in).max_abs(), 0.0);
	EXPECT_EQ(grad_R1(nullptr, out, in), grad_R(out, in));
}

TEST(Sparsity, KnownValues) {
	EXPECT_EQ(sparsity_S(Tensor({2, 3, 3}, 1.0)), 0.0);
	EXPECT_NEAR(sparsity_S(Tensor({1, 2, 2}, 1.0 / kE)), 1.0 / kE, 1e-15);
	Tensor two({2, 1, 2});
	two[0] = two[1] = 1.0;
	two[2] = two[3] = 1.0 / kE;
	EXPECT_NEAR(sparsity_S(two), 1.0 / (2.0 * kE), 1e-15);
	EXPECT_NEAR(0.367879, 1.0 / kE, 1e-6);
}

TEST(Sparsity, NonNegativeAndClampedAtZero) {
	Rng rng(2);
	for (int n = 0; n < 100; ++n) EXPECT_GE(sparsity_S(random_tensor({4, 3, 3}, rng)), 0.0);
	const double s = sparsity_S(Tensor({2, 2, 2}, 0.0));
	EXPECT_TRUE(std::isfinite(s));
	EXPECT_GE(s, 0.0);
	EXPECT_THROW(sparsity_S(std::span<const Tensor>{}), std::invalid_argument);
}

TEST(ReconstructionLoss, KnownValues) {
	EXPECT_EQ(reconstruction_loss_RL(one_hot(1, 3), std::vector<double>{0, 1, 0}), 0.0);
	EXPECT_NEAR(reconstruction_loss_RL(one_hot(1, 3), std::vector<double>{0.1, 0.7, 0.2}), -0.356675, 1e-6);
	EXPECT_NEAR(reconstruction_loss_RL(one_hot(0, 2), std::vector<double>{1 / kE, 1 - 1 / kE}), -1.0, 1e-15);
	EXPECT_THROW(reconstruction_loss_RL(one_hot(0, 2), std::vector<double>{1, 0, 0}), ShapeError);
}

TEST(ReconstructionLoss, NonPositiveForProbabilities) {
	Rng rng(3);
	for (int n = 0; n < 200; ++n) {
		std::vector<double> z(2 + rng.index(5));
		for (double& v : z) v = rng.uniform(-10, 10);
		const std::vector<double> p = softmax(z);
		EXPECT_LE(reconstruction_loss_RL(one_hot(rng.index(p.size()), p.size()), p), 0.0);
	}
}

TEST(Composition, Identities) {
	EXPECT_EQ(classic_L(3.0, 2.0, 0.0), 3.0);
	EXPECT_EQ(enhanced_EML(5.0, -0.5, 2.0, 0.0), 5.5);
	EXPECT_NEAR(enhanced_EML(5.0, -0.356675, 0.1, 0.5), 5.406675, 1e-12);
	EXPECT_EQ(enhanced_EML(0, 0, 0, 0.3), 0.0);
	const LossReport r = compose_report(ObjectiveMode::enhanced, 2.0, 3.0, -0.25, 0.5, 0.1);
	EXPECT_EQ(r.L, 2.0 + 0.1 * 0.5);
	EXPECT_EQ(r.MR, 3.25);
	EXPECT_EQ(r.EML, 3.25 + 0.05);
	EXPECT_EQ(r.objective(), r.EML);
	EXPECT_GE(r.EML, r.R1);
}

TEST(Gradients, MatchFiniteDifferences) {
	Rng rng(4);
	const Tensor in = random_tensor({2, 3}, rng);
	Tensor out = random_tensor({2, 3}, rng);
	const Tensor gR = grad_R(out, in);
	for (std::size_t i = 0; i < out.size(); ++i) {
		const double n = fd([&](double v) { Tensor o = out; o[i] = v; return reconstruction_R(o, in); }, out[i]);
		EXPECT_NEAR(gR[i], n, 1e-7);
	}

	std::vector<double> p{0.2, 0.5, 0.3};
	const auto y = one_hot(1, 3);
	const auto gRL = grad_RL(y, p);
	for (std::size_t i = 0; i < 3; ++i) {
		const double n = fd([&](double v) { auto q = p; q[i] = v; return reconstruction_loss_RL(y, q); }, p[i]);
		EXPECT_NEAR(gRL[i], n, 1e-6);
	}

	std::vector<double> r{0.1, 0.4, 0.9};
	const auto gS = grad_S_means(r);
	for (std::size_t j = 0; j < 3; ++j) {
		const double n = fd([&](double v) { auto q = r; q[j] = v; return sparsity_from_means(q); }, r[j]);
		EXPECT_NEAR(gS[j], n, 1e-7);
	}
}

TEST(BatchObjective, ReportAndCodeGradient) {
	Rng rng(5);
	const std::size_t B = 3, classes = 3;
	std::vector<Tensor> recon, target, prev, code;
	std::vector<std::vector<double>> probs;
	for (std::size_t b = 0; b < B; ++b) {
		recon.push_back(random_tensor({1, 4, 4}, rng));
		target.push_back(random_tensor({1, 4, 4}, rng));
		prev.push_back(random_tensor({1, 4, 4}, rng));
		code.push_back(random_tensor({2, 2, 2}, rng, 0.05, 0.95));
		probs.push_back(softmax(std::vector<double>{rng.uniform(), rng.uniform(), rng.uniform()}));
	}
	const double lambda = 0.7;
	auto terms_for = [&](bool with_prev) {
		std::vector<SampleTerms> t(B);
		for (std::size_t b = 0; b < B; ++b)
			t[b] = SampleTerms{&recon[b], &target[b], with_prev && b != 1 ? &prev[b] : nullptr, &code[b], probs[b], {}, b % classes};
		return t;
	};

	for (ObjectiveMode mode : {ObjectiveMode::classic, ObjectiveMode::enhanced}) {
		const auto terms = terms_for(true);
		const BatchObjective obj = loss_backward(mode, terms, lambda);
		const LossReport& r = obj.report;
		double R = 0, R1 = 0, RL = 0;
		for (std::size_t b = 0; b < B; ++b) {
			R += reconstruction_R(recon[b], target[b]);
			R1 += reconstruction_R1(b != 1 ? &prev[b] : nullptr, recon[b], target[b]);
			RL += std::log(probs[b][b % classes]);
		}
		EXPECT_NEAR(r.R, R / B, 1e-12);
		EXPECT_NEAR(r.R1, R1 / B, 1e-12);
		EXPECT_NEAR(r.RL, RL / B, 1e-12);
		EXPECT_NEAR(r.S, sparsity_S(code), 1e-12);
		EXPECT_NEAR(r.L, r.R + lambda * r.S, 1e-12);
		EXPECT_NEAR(r.MR, r.R1 - r.RL, 1e-12);
		EXPECT_NEAR(r.EML, r.MR + lambda * r.S, 1e-12);
		EXPECT_EQ(obj.grads[0].classifier_into_decoder, mode == ObjectiveMode::enhanced);
		if (mode == ObjectiveMode::enhanced) {
			EXPECT_EQ(obj.grads[0].recon.max_abs(), 0.0); // stop-gradient through the stored output
			EXPECT_GT(obj.grads[1].recon.max_abs(), 0.0);
		}

		// lambda_s * S gradient with respect to one code cell
		for (std::size_t i : {0u, 5u}) {
			const double orig = code[2][i];
			auto S_at = [&](double v) {
				code[2][i] = v;
				const double s = lambda * sparsity_S(code);
				code[2][i] = orig;
				return s;
			};
			EXPECT_NEAR(obj.grads[2].code[i], fd(S_at, orig), 1e-8);
		}
	}
}

TEST(BatchObjective, LambdaScalesSparsityGradientLinearly) {
	Rng rng(6);
	Tensor recon = random_tensor({1, 3, 3}, rng), target = random_tensor({1, 3, 3}, rng);
	Tensor code = random_tensor({2, 2, 2}, rng, 0.1, 0.9);
	const std::vector<double> p{0.3, 0.7};
	const std::vector<SampleTerms> t{{&recon, &target, nullptr, &code, p, {}, 0}};
	const auto a = loss_backward(ObjectiveMode::classic, t, 0.2);
	const auto b = loss_backward(ObjectiveMode::classic, t, 0.6);
	for (std::size_t i = 0; i < code.size(); ++i) EXPECT_NEAR(b.grads[0].code[i], 3.0 * a.grads[0].code[i], 1e-15);
}

TEST(PrevBuffer, StoreFindAdvance) {
	PrevOutputBuffer buf;
	EXPECT_TRUE(buf.empty());
	EXPECT_EQ(buf.find(3), nullptr);
	buf.store(3, Tensor({1, 2, 2}, 0.5));
	buf.advance();
	ASSERT_NE(buf.find(3), nullptr);
	EXPECT_EQ((*buf.find(3))[0], 0.5);
	EXPECT_EQ(buf.iteration(), 1u);
	EXPECT_THROW(buf.store(3, Tensor({1, 3, 3})), ShapeError);
	buf.clear();
	EXPECT_TRUE(buf.empty());
	EXPECT_EQ(buf.iteration(), 0u);
}

TEST(ObjectiveMode, Parse) {
	EXPECT_EQ(parse_objective_mode("classic"), ObjectiveMode::classic);
	EXPECT_EQ(parse_objective_mode("enhanced"), ObjectiveMode::enhanced);
	EXPECT_THROW(parse_objective_mode("other"), std::invalid_argument);
}

#include <gtest/gtest.h>

#include <cmath>

#include "mir/adam.hpp"
#include "mir/random.hpp"
#include "oracles.hpp"

using namespace mir;

namespace {

struct Scalar {
	std::vector<Tensor> p{Tensor({1}, 0.0)};
	AdamState s;
	explicit Scalar(AdamConfig c = {}) : s(adam_init(p, c)) {}
	double step(double g) {
		std::vector<Tensor> grads{Tensor({1}, g)};
		adam_step(s, p, grads);
		return p[0][0];
	}
};

} // namespace

TEST(Adam, InitZeroMomentsMirrorShapes) {
	std::vector<Tensor> p{Tensor({2, 3}, 1.0), Tensor({4})};
	const AdamState s = adam_init(p);
	EXPECT_EQ(s.t, 0u);
	ASSERT_EQ(s.m.size(), 2u);
	EXPECT_EQ(s.m[0].shape(), p[0].shape());
	EXPECT_EQ(s.v[1].shape(), p[1].shape());
	EXPECT_EQ(s.m[0].max_abs() + s.v[0].max_abs(), 0.0);
	EXPECT_EQ(s.cfg.alpha, 0.001);
	EXPECT_EQ(s.cfg.phi1, 0.9);
	EXPECT_EQ(s.cfg.phi2, 0.999);
	EXPECT_EQ(s.cfg.epsilon, 1e-8);
}

TEST(Adam, InvalidConfigRejected) {
	std::vector<Tensor> p{Tensor({1})};
	EXPECT_THROW(adam_init(p, {0.001, 1.0, 0.999, 1e-8}), std::invalid_argument);
	EXPECT_THROW(adam_init(p, {0.001, 0.9, 1.5, 1e-8}), std::invalid_argument);
	EXPECT_THROW(adam_init(p, {-1.0, 0.9, 0.999, 1e-8}), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParams) {
	Scalar a;
	a.p[0][0] = 0.25;
	EXPECT_EQ(a.step(0.0), 0.25);
	EXPECT_EQ(a.s.t, 1u);
}

TEST(Adam, FirstStepHandExecuted) {
	Scalar a;
	const double th = a.step(1.0);
	EXPECT_NEAR(a.s.m[0][0], 0.1, 1e-16);
	EXPECT_NEAR(a.s.v[0][0], 0.001, 1e-18);
	EXPECT_NEAR(th, -0.001 / (1.0 + 1e-8), 1e-12);
}

TEST(Adam, TwoStepsMatchScalarOracle) {
	Scalar a;
	oracle::ScalarAdam o;
	double th = 0;
	for (int i = 0; i < 2; ++i) th = o.step(th, 1.0);
	a.step(1.0);
	EXPECT_NEAR(a.step(1.0), th, 1e-15);
}

TEST(Adam, FirstUpdateMagnitude) {
	Rng rng(1);
	for (int n = 0; n < 100; ++n) {
		const double g = rng.uniform(-5, 5) * std::pow(10.0, rng.uniform(-6, 2));
		Scalar a;
		const double d = a.step(g);
		EXPECT_NEAR(std::abs(d), 0.001 * std::abs(g) / (std::abs(g) + 1e-8), 1e-12);
		EXPECT_EQ(d < 0, g > 0);
	}
}

TEST(Adam, ElementwisePermutation) {
	Rng rng(2);
	std::vector<Tensor> p{Tensor({5})}, q{Tensor({5})};
	std::vector<std::size_t> perm{3, 0, 4, 1, 2};
	for (std::size_t i = 0; i < 5; ++i) p[0][i] = rng.uniform(-1, 1);
	for (std::size_t i = 0; i < 5; ++i) q[0][i] = p[0][perm[i]];
	AdamState sp = adam_init(p), sq = adam_init(q);
	for (int step = 0; step < 10; ++step) {
		std::vector<Tensor> gp{Tensor({5})}, gq{Tensor({5})};
		for (std::size_t i = 0; i < 5; ++i) gp[0][i] = rng.uniform(-1, 1);
		for (std::size_t i = 0; i < 5; ++i) gq[0][i] = gp[0][perm[i]];
		adam_step(sp, p, gp);
		adam_step(sq, q, gq);
	}
	for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(q[0][i], p[0][perm[i]]);
}

TEST(Adam, MomentsStayFiniteAndVNonNegative) {
	Rng rng(3);
	std::vector<Tensor> p{Tensor({8})};
	AdamState s = adam_init(p);
	for (int step = 0; step < 500; ++step) {
		std::vector<Tensor> g{Tensor({8})};
		for (double& v : g[0].values()) v = rng.normal() * 100;
		adam_step(s, p, g);
	}
	EXPECT_TRUE(s.m[0].all_finite());
	EXPECT_TRUE(s.v[0].all_finite());
	for (double v : s.v[0].values()) EXPECT_GE(v, 0.0);
}

TEST(Adam, Deterministic) {
	auto run = [] {
		Rng rng(4);
		std::vector<Tensor> p{Tensor({6})};
		AdamState s = adam_init(p);
		for (int step = 0; step < 50; ++step) {
			std::vector<Tensor> g{Tensor({6})};
			for (double& v : g[0].values()) v = rng.uniform(-1, 1);
			adam_step(s, p, g);
		}
		return p[0];
	};
	EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchAndOverflow) {
	std::vector<Tensor> p{Tensor({2})};
	AdamState s = adam_init(p);
	std::vector<Tensor> wrong{Tensor({3})};
	EXPECT_THROW(adam_step(s, p, wrong), ShapeError);
	std::vector<Tensor> ok{Tensor({2})};
	s.t = std::numeric_limits<std::uint64_t>::max();
	EXPECT_THROW(adam_step(s, p, ok), std::overflow_error);
}

TEST(Adam, Convergence) {
	const AdamState s;
	EXPECT_TRUE(adam_converged(s, 0.0, 1e-12));
	EXPECT_FALSE(adam_converged(s, 1e3, 1e-8));
	// a larger tolerance never converges later
	Scalar a;
	std::vector<double> deltas;
	double prev = 0;
	for (int i = 0; i < 200; ++i) {
		const double th = a.step(1.0 / (1 + i * i));
		deltas.push_back(std::abs(th - prev));
		prev = th;
	}
	auto first = [&](double tol) {
		for (std::size_t i = 0; i < deltas.size(); ++i)
			if (adam_converged(s, deltas[i], tol)) return i;
		return deltas.size();
	};
	std::size_t last = deltas.size();
	for (double tol : {1e-9, 1e-7, 1e-5, 1e-4, 1e-3, 1e-2}) {
		const std::size_t f = first(tol);
		EXPECT_LE(f, last);
		last = f;
	}
	std::vector<Tensor> d{Tensor({2}, 1e-10)};
	EXPECT_TRUE(adam_converged(s, d, 1e-8));
}

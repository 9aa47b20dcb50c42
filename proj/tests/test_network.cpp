#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mir/adam.hpp"
#include "mir/gradcheck.hpp"
#include "mir/network.hpp"
#include "mir/random.hpp"

using namespace mir;

namespace {

Tensor random_gray(std::size_t n, Rng& rng) {
	Tensor t({1, n, n});
	for (double& v : t.values()) v = rng.uniform();
	return t;
}

NetworkConfig config(PoolMode m, std::size_t size = 32, std::size_t window = 3) {
	NetworkConfig c;
	c.input_size = size;
	c.window = window;
	c.pool_mode = m;
	return c;
}

} // namespace

TEST(NetworkConfig, ParameterCountShapeAudit) {
	// input 32, 3x3 filters, 8 filters, max pool 2/2 -> code 15x15, decoder kernel 32 - 2*14 = 4
	const std::size_t enc = 8 * 1 * 3 * 3 + 8;
	const std::size_t dec = 8 * 1 * 4 * 4 + 1;
	const std::size_t hidden = 256 * 32 * 32 + 256;
	const std::size_t out = 3 * 256 + 3;
	const Network net = init_network(config(PoolMode::max));
	EXPECT_EQ(net.parameter_count(), enc + dec + hidden + out);
	EXPECT_EQ(net.parameter_count(), 263380u);
	std::size_t from_shapes = 0;
	for (const Shape& s : param_shapes(net.config)) from_shapes += shape_numel(s);
	EXPECT_EQ(from_shapes, net.parameter_count());
}

TEST(NetworkConfig, InvalidConfigsRejected) {
	NetworkConfig c;
	c.window = 6;
	EXPECT_THROW(validate(c), std::invalid_argument);
	c = {};
	c.classes = 1;
	EXPECT_THROW(validate(c), std::invalid_argument);
	c = {};
	c.classifier_hidden = 2;
	EXPECT_THROW(validate(c), std::invalid_argument);
	c = {};
	c.pool_mode = PoolMode::risa;
	c.filters = 7;
	EXPECT_THROW(validate(c), std::invalid_argument);
	EXPECT_THROW(parse_pool_mode("avg"), std::invalid_argument);
}

TEST(Init, SeedDeterminismAndGlorotBounds) {
	const Network a = init_network(config(PoolMode::max)), b = init_network(config(PoolMode::max));
	EXPECT_EQ(a, b);
	NetworkConfig other = config(PoolMode::max);
	other.seed = 43;
	EXPECT_NE(a.params[kEncKernel], init_network(other).params[kEncKernel]);
	EXPECT_EQ(a.param(kEncBias).max_abs(), 0.0);
	EXPECT_EQ(a.param(kOutBias).max_abs(), 0.0);
	const double s_hidden = std::sqrt(6.0 / (1024 + 256));
	EXPECT_LE(a.param(kHiddenWeight).max_abs(), s_hidden);
	EXPECT_GT(a.param(kHiddenWeight).max_abs(), 0.9 * s_hidden);
	const double s_enc = std::sqrt(6.0 / (9 + 72));
	EXPECT_LE(a.param(kEncKernel).max_abs(), s_enc);
}

TEST(Forward, ShapesForAllModesAndWindows) {
	Rng rng(1);
	for (PoolMode m : {PoolMode::max, PoolMode::risa, PoolMode::mir})
		for (std::size_t w : {3u, 4u, 5u}) {
			const Network net = init_network(config(m, 32, w));
			const Tensor x = network_input(net.config, random_gray(32, rng));
			const AutoencodeCache ae = forward_autoencode(net, x);
			EXPECT_EQ(ae.reconstruction.shape(), x.shape()) << to_string(m) << " " << w;
			for (double v : ae.code.values()) {
				EXPECT_GT(v, 0.0);
				EXPECT_LT(v, 1.0);
			}
			const ClassifyCache cls = forward_classify(net, ae.reconstruction);
			EXPECT_NEAR(std::accumulate(cls.probs.begin(), cls.probs.end(), 0.0), 1.0, 1e-12);
		}
}

TEST(Forward, MirInputIsMultispaceStack) {
	Rng rng(2);
	const Tensor g = random_gray(16, rng);
	NetworkConfig c = config(PoolMode::mir, 16);
	EXPECT_EQ(network_input(c, g), multispace_reconstruct(g).stacked());
	c.pool_mode = PoolMode::max;
	EXPECT_EQ(network_input(c, g), g);
}

TEST(Forward, ShapeMismatchRejected) {
	const Network net = init_network(config(PoolMode::mir, 16));
	EXPECT_THROW(forward_autoencode(net, Tensor({1, 16, 16})), ShapeError);
	EXPECT_THROW(forward_classify(net, Tensor({1, 16, 16})), ShapeError);
}

TEST(Forward, ZeroClassifierIsUniform) {
	Rng rng(3);
	Network net = init_network(config(PoolMode::max, 16));
	net.param(kOutWeight).fill(0.0);
	const auto p = predict(net, random_gray(16, rng));
	for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Backward, ZeroLossGradientsAndShapes) {
	Rng rng(4);
	const Network net = init_network(config(PoolMode::risa, 16));
	const Tensor x = random_gray(16, rng);
	const AutoencodeCache ae = forward_autoencode(net, x);
	const ClassifyCache cls = forward_classify(net, ae.reconstruction);
	LossGrads lg{Tensor::zeros_like(ae.reconstruction), std::vector<double>(3, 0.0), Tensor::zeros_like(ae.code), true};
	const std::vector<Tensor> g = backward(net, ae, cls, lg);
	ASSERT_EQ(g.size(), net.params.size());
	for (std::size_t i = 0; i < g.size(); ++i) {
		EXPECT_EQ(g[i].shape(), net.params[i].shape());
		EXPECT_EQ(g[i].max_abs(), 0.0);
	}
}

TEST(Backward, StaleCacheRejected) {
	Rng rng(5);
	const Network small = init_network(config(PoolMode::max, 16));
	const Network big = init_network(config(PoolMode::max, 32));
	const AutoencodeCache ae = forward_autoencode(small, random_gray(16, rng));
	const ClassifyCache cls = forward_classify(small, ae.reconstruction);
	LossGrads lg{Tensor::zeros_like(ae.reconstruction), std::vector<double>(3, 0.0), Tensor::zeros_like(ae.code), true};
	EXPECT_THROW(backward(big, ae, cls, lg), std::logic_error);
}

TEST(Backward, FullGraphFiniteDifferences) {
	for (PoolMode m : {PoolMode::max, PoolMode::risa, PoolMode::mir}) {
		const auto s = gradcheck_network(m, ObjectiveMode::enhanced, true, 21);
		EXPECT_TRUE(s.ok()) << s.name << " " << s.passed << "/" << s.checked << " max " << s.max_rel_error;
	}
	const auto c = gradcheck_network(PoolMode::max, ObjectiveMode::classic, false, 22);
	EXPECT_TRUE(c.ok()) << c.name << " max " << c.max_rel_error;
}

TEST(Backward, StoredOutputMakesR1ConstantInDecoder) {
	// with a previous output present, decoder parameters move EML only through RL and S
	Rng rng(6);
	Network net = init_network(gradcheck_network_config(PoolMode::max, 6));
	const Tensor x = random_gray(16, rng), prev = random_gray(16, rng);
	auto r1 = [&] {
		const AutoencodeCache ae = forward_autoencode(net, x);
		return reconstruction_R1(&prev, ae.reconstruction, x);
	};
	const double base = r1();
	for (std::size_t i = 0; i < net.param(kDecKernel).size(); i += 7) {
		net.param(kDecKernel)[i] += 1e-3;
		EXPECT_EQ(r1(), base);
		net.param(kDecKernel)[i] -= 1e-3;
	}
}

TEST(Training, ReconstructionErrorDropsOnFixedBatch) {
	Rng rng(7);
	Network net = init_network(gradcheck_network_config(PoolMode::max, 7));
	std::vector<Tensor> batch;
	for (int i = 0; i < 4; ++i) batch.push_back(random_gray(16, rng));
	auto total_R = [&] {
		double s = 0;
		for (const Tensor& x : batch) s += reconstruction_R(forward_autoencode(net, x).reconstruction, x);
		return s;
	};
	const double before = total_R();
	AdamState opt = adam_init(net.params, {0.01, 0.9, 0.999, 1e-8});
	for (int step = 0; step < 50; ++step) {
		std::vector<Tensor> grads = zero_grads(net);
		for (const Tensor& x : batch) {
			const AutoencodeCache ae = forward_autoencode(net, x);
			const ClassifyCache cls = forward_classify(net, ae.reconstruction);
			LossGrads lg{grad_R(ae.reconstruction, x), std::vector<double>(3, 0.0), Tensor::zeros_like(ae.code), false};
			backward(net, ae, cls, lg, grads);
		}
		adam_step(opt, net.params, grads);
	}
	EXPECT_LT(total_R(), before);
}

TEST(Determinism, ForwardBackwardBitwise) {
	auto run = [] {
		Rng rng(8);
		const Network net = init_network(config(PoolMode::mir, 16));
		const Tensor x = network_input(net.config, random_gray(16, rng));
		const AutoencodeCache ae = forward_autoencode(net, x);
		const ClassifyCache cls = forward_classify(net, ae.reconstruction);
		LossGrads lg{grad_R(ae.reconstruction, x), {0.1, -0.2, 0.3}, Tensor(ae.code.shape(), 0.01), true};
		return backward(net, ae, cls, lg);
	};
	EXPECT_EQ(run(), run());
}

#include <gtest/gtest.h>

#include <set>

#include "mir/random.hpp"
#include "mir/tensor.hpp"

using namespace mir;

TEST(Tensor, ShapeAndFill) {
	Tensor t({2, 3, 4}, 1.5);
	EXPECT_EQ(t.rank(), 3u);
	EXPECT_EQ(t.size(), 24u);
	EXPECT_DOUBLE_EQ(t.sum(), 36.0);
	EXPECT_EQ(shape_str(t.shape()), "[2,3,4]");
	EXPECT_EQ(t.at(1, 2, 3), 1.5);
}

TEST(Tensor, RejectsZeroExtentAndBadData) {
	EXPECT_THROW(Tensor({2, 0}), ShapeError);
	EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
	EXPECT_NO_THROW(Tensor({2, 2}, std::vector<double>(4)));
}

TEST(Tensor, RowMajorLayout) {
	Tensor t({2, 2, 3});
	for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
	EXPECT_EQ(t.at(1, 0, 2), 8.0);
	EXPECT_EQ(t.at(0, 1, 1), 4.0);
}

TEST(Tensor, ArithmeticAndFiniteness) {
	Tensor a({3}, 2.0), b({3}, 1.0);
	a += b;
	a *= 2.0;
	EXPECT_EQ(a, Tensor({3}, 6.0));
	EXPECT_TRUE(a.all_finite());
	a[1] = std::numeric_limits<double>::quiet_NaN();
	EXPECT_FALSE(a.all_finite());
	EXPECT_THROW(a += Tensor({4}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
	Tensor t({2, 3});
	t[5] = 7.0;
	Tensor r = t.reshaped({6});
	EXPECT_EQ(r[5], 7.0);
	EXPECT_THROW(t.reshaped({5}), ShapeError);
}

TEST(Rng, DeterministicAndInRange) {
	Rng a(9), b(9);
	for (int i = 0; i < 1000; ++i) {
		const double u = a.uniform();
		EXPECT_EQ(u, b.uniform());
		EXPECT_GE(u, 0.0);
		EXPECT_LT(u, 1.0);
		EXPECT_LT(a.index(7), 7u);
		b.index(7);
	}
}

TEST(Rng, ShuffleIsPermutation) {
	Rng rng(3);
	std::vector<int> v(50);
	for (int i = 0; i < 50; ++i) v[i] = i;
	rng.shuffle(v);
	EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
}

TEST(Rng, DerivedSeedsDiffer) {
	EXPECT_NE(derive_seed(42, 0), derive_seed(42, 1));
	EXPECT_NE(derive_seed(42, 0), derive_seed(43, 0));
	EXPECT_EQ(derive_seed(42, 5), derive_seed(42, 5));
}

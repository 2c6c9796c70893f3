#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "wsense/errors.hpp"
#include "wsense/tensor.hpp"

using namespace wsense;

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor::scalar(4.0).size(), 1u);
}

TEST(Tensor, RowMajorRoundTrip) {
  Tensor t({3, 4, 5});
  Rng rng(1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 5; ++k) {
        const double v = rng.normal();
        t.at({i, j, k}) = v;
        EXPECT_EQ(t.at({i, j, k}), v);
        EXPECT_EQ(t[(i * 4 + j) * 5 + k], v);
      }
  EXPECT_THROW(t.at({3, 0, 0}), DimensionError);
  EXPECT_THROW(t.at({0, 0}), DimensionError);
}

TEST(Tensor, MatmulExamples) {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  EXPECT_EQ(matmul(eye, b), b);
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5, 6}, {7, 8}})),
            Tensor::matrix({{19, 22}, {43, 50}}));
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos) << e.what();
  }
}

TEST(Tensor, MatmulAssociative) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), l = 1 + rng.below(6), n = 1 + rng.below(6);
    const Tensor a = oracle::random_tensor({m, k}, rng);
    const Tensor b = oracle::random_tensor({k, l}, rng);
    const Tensor c = oracle::random_tensor({l, n}, rng);
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LE(oracle::rel_error(left[i], right[i]), 1e-9);
    }
  }
}

TEST(Tensor, ElementwiseAndBroadcast) {
  EXPECT_EQ(ew(EwOp::mul, Tensor::vector({1, 2, 3}), 2.0), Tensor::vector({2, 4, 6}));
  EXPECT_EQ(ew(EwOp::mul, Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({10, 20})),
            Tensor::matrix({{10, 40}, {30, 80}}));
  EXPECT_THROW(ew(EwOp::div, Tensor::vector({1, 2}), Tensor::vector({0, 0})), ValueError);
  EXPECT_THROW(ew(EwOp::add, Tensor({2, 3}), Tensor({2})), DimensionError);
}

TEST(Tensor, BroadcastEqualsExplicitReplication) {
  Rng rng(3);
  const Tensor a = oracle::random_tensor({4, 3, 5}, rng);
  const Tensor b = oracle::random_tensor({1, 5}, rng);
  Tensor replicated({4, 3, 5});
  for (std::size_t i = 0; i < replicated.size(); ++i) replicated[i] = b[i % 5];
  for (EwOp op : {EwOp::add, EwOp::sub, EwOp::mul, EwOp::max}) {
    EXPECT_EQ(ew(op, a, b), ew(op, a, replicated));
  }
}

TEST(Tensor, Reduce) {
  EXPECT_EQ(reduce(ReduceKind::max, Tensor::matrix({{1, 5}, {3, 2}, {4, 4}}), 0), Tensor::vector({4, 5}));
  const Tensor m = reduce(ReduceKind::mean, Tensor::vector({2, 4, 6}), 0);
  EXPECT_EQ(m.rank(), 0u);
  EXPECT_EQ(m[0], 4.0);
  EXPECT_EQ(reduce(ReduceKind::sum, Tensor::matrix({{1, 2}, {3, 4}}), 1), Tensor::vector({3, 7}));
  EXPECT_THROW(reduce(ReduceKind::sum, Tensor({0, 3}), 0), DimensionError);
  EXPECT_THROW(reduce(ReduceKind::sum, Tensor({2, 3}), 2), DimensionError);
}

TEST(Tensor, SerialisationIsBitwiseStable) {
  Rng rng(4);
  Tensor t = oracle::random_tensor({3, 7, 2}, rng, -1e6, 1e6);
  t[0] = -0.0;
  t[1] = 5e-324;
  std::stringstream buf;
  write_tensor(buf, t);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "WSNT");
  EXPECT_EQ(bytes.size(), 4 + 8 + 3 * 8 + t.size() * 8);
  // Rank is little-endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3);
  const Tensor back = read_tensor(buf);
  ASSERT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(t[i]));
  }
  std::stringstream again;
  write_tensor(again, back);
  EXPECT_EQ(again.str(), bytes);

  std::stringstream bad("WSNX");
  EXPECT_THROW(read_tensor(bad), FormatError);
}

TEST(Tensor, TensorSetRoundTrip) {
  Rng rng(5);
  TensorSet set{{"a", oracle::random_tensor({2, 2}, rng)}, {"b/c", Tensor::scalar(3)}};
  std::stringstream buf;
  write_tensor_set(buf, set);
  EXPECT_EQ(read_tensor_set(buf), set);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "swingrade/gradcheck.hpp"
#include "swingrade/io.hpp"
#include "swingrade/ops.hpp"
#include "swingrade/rng.hpp"
#include "swingrade/tensor.hpp"

using namespace swingrade;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool rg = true) {
  std::size_t n = shape_numel(shape);
  std::vector<double> d(n);
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(d), rg);
}

// Loss with fixed random weights so gradients are generic (no symmetric
// cancellation).
Tensor weighted_sum(const Tensor& t, Rng& rng) {
  std::size_t n = t.numel();
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(0.5, 1.5);
  return sum_all(mul(t, Tensor::from(t.shape(), std::move(w))));
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST(Matmul, IdentityCase) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  EXPECT_EQ(r.data(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandArithmetic) {
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = Tensor::from({2, 1}, {3, 4});
  Tensor r = matmul(a, b);
  ASSERT_EQ(r.numel(), 1u);
  EXPECT_DOUBLE_EQ(r[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Rng wr(11);
  Tensor loss = weighted_sum(matmul(a, b), wr);
  backward(loss);

  std::vector<Parameter> params{{a, "a"}, {b, "b"}};
  Rng wr2(11);
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(11);
    return weighted_sum(matmul(a, b), w).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-6);
  EXPECT_TRUE(rep.pass) << "max rel err " << rep.max_rel_err << " at " << rep.worst_param;
}

TEST(Bmm, MatchesPerBatchMatmulAndGradients) {
  Rng rng(13);
  Tensor a = random_tensor({3, 2, 4}, rng);
  Tensor b = random_tensor({3, 4, 5}, rng);
  Tensor c = bmm(a, b);
  // forward agrees with slicing into 2-D matmuls
  for (std::size_t bi = 0; bi < 3; ++bi) {
    Tensor as = reshape(slice(a, 0, bi, 1), {2, 4});
    Tensor bs = reshape(slice(b, 0, bi, 1), {4, 5});
    Tensor cs = matmul(as, bs);
    for (std::size_t i = 0; i < cs.numel(); ++i)
      EXPECT_DOUBLE_EQ(c[bi * 10 + i], cs[i]);
  }
  Rng wr(3);
  backward(weighted_sum(c, wr));
  std::vector<Parameter> params{{a, "a"}, {b, "b"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(3);
    return weighted_sum(bmm(a, b), w).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-6);
  EXPECT_TRUE(rep.pass) << rep.max_rel_err;
}

TEST(Bmm, TransposedBGradients) {
  Rng rng(17);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 5, 4}, rng);
  Rng wr(19);
  backward(weighted_sum(bmm(a, b, /*trans_b=*/true), wr));
  std::vector<Parameter> params{{a, "a"}, {b, "b"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(19);
    return weighted_sum(bmm(a, b, true), w).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-6);
  EXPECT_TRUE(rep.pass) << rep.max_rel_err;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

TEST(Elementwise, SigmoidAnalyticPoints) {
  Tensor x = Tensor::from({2}, {0.0, std::log(3.0)});
  Tensor y = sigmoid(x);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST(Elementwise, GeluGradientAtPoint) {
  Tensor x = Tensor::from({1}, {0.7}, true);
  backward(sum_all(gelu(x)));
  double h = 1e-6;
  auto g = [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); };
  double fd = (g(0.7 + h) - g(0.7 - h)) / (2 * h);
  EXPECT_NEAR(x.grad()[0], fd, 1e-6 * std::fabs(fd));
}

TEST(Elementwise, GradientsMatchFiniteDifferencesOnRandomInstances) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({4, 3}, rng);
    std::uint64_t scheme = rng.randint(6);
    std::uint64_t wseed = rng.randint(1u << 20);
    auto build = [&]() {
      switch (scheme) {
        case 0: return add(a, b);
        case 1: return sub(a, b);
        case 2: return mul(a, b);
        case 3: return gelu(a);
        case 4: return sigmoid(a);
        default: return scale(a, 0.37);
      }
    };
    Rng wr(wseed);
    backward(weighted_sum(build(), wr));
    std::vector<Parameter> params{{a, "a"}, {b, "b"}};
    auto f = [&]() {
      NoGradGuard ng;
      Rng w(wseed);
      return weighted_sum(build(), w).value();
    };
    auto rep = finite_diff_check(f, params, 1e-5, 1e-5);
    EXPECT_TRUE(rep.pass) << "scheme " << scheme << " err " << rep.max_rel_err;
    a.zero_grad();
    b.zero_grad();
  }
}

TEST(Elementwise, ReluGradientMasksNegatives) {
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}, true);
  backward(sum_all(relu(x)));
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 0, 1}));
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST(Softmax, SymmetryAndAnalytic) {
  Tensor a = softmax(Tensor::from({2}, {0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);

  Tensor b = softmax(Tensor::from({2}, {std::log(2.0), 0.0}), 0);
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputStable) {
  Tensor y = softmax(Tensor::from({2}, {1000.0, 0.0}), 0);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = random_tensor({3, 5, 2}, rng, false);
    std::size_t axis = rng.randint(3);
    Tensor y = softmax(x, axis);
    auto sp = detail::axis_split(y.shape(), axis);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        double s = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e)
          s += y[(o * sp.extent + e) * sp.inner + i];
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Softmax, InvalidAxisThrows) {
  EXPECT_THROW(softmax(Tensor::zeros({2, 2}), 2), DimensionError);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(37);
  Tensor x = random_tensor({2, 4}, rng);
  Rng wr(5);
  backward(weighted_sum(softmax(x, 1), wr));
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(5);
    return weighted_sum(softmax(x, 1), w).value();
  };
  EXPECT_TRUE(finite_diff_check(f, params, 1e-5, 1e-5).pass);
}

// ---------------------------------------------------------------------------
// layer_normalize
// ---------------------------------------------------------------------------

TEST(LayerNorm, ConstantInputGivesZeros) {
  Tensor y = layer_normalize(Tensor::from({3}, {1, 1, 1}), 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], 0.0);
}

TEST(LayerNorm, TwoPointCase) {
  Tensor y = layer_normalize(Tensor::from({2}, {1, 3}), 0);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(41);
  Tensor x = random_tensor({3, 6}, rng);
  Rng wr(9);
  backward(weighted_sum(layer_normalize(x, 1), wr));
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(9);
    return weighted_sum(layer_normalize(x, 1), w).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.max_rel_err;
}

// ---------------------------------------------------------------------------
// l2_normalize
// ---------------------------------------------------------------------------

TEST(L2Normalize, ThreeFourFiveTriangle) {
  Tensor y = l2_normalize(Tensor::from({2}, {3, 4}));
  EXPECT_DOUBLE_EQ(y[0], 0.6);
  EXPECT_DOUBLE_EQ(y[1], 0.8);
}

TEST(L2Normalize, ZeroVectorFloors) {
  Tensor y = l2_normalize(Tensor::from({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(L2Normalize, UnitVectorIdempotent) {
  Rng rng(43);
  for (int t = 0; t < 50; ++t) {
    Tensor x = random_tensor({4}, rng, false);
    Tensor u = l2_normalize(x);
    Tensor uu = l2_normalize(u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(uu[i], u[i], 1e-12);
    double n = 0;
    for (std::size_t i = 0; i < 4; ++i) n += u[i] * u[i];
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(L2Normalize, GradientMatchesFiniteDifferences) {
  Rng rng(47);
  Tensor x = random_tensor({3, 4}, rng);
  Rng wr(21);
  backward(weighted_sum(l2_normalize(x), wr));
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(21);
    return weighted_sum(l2_normalize(x), w).value();
  };
  EXPECT_TRUE(finite_diff_check(f, params, 1e-5, 1e-5).pass);
}

// ---------------------------------------------------------------------------
// stop_gradient
// ---------------------------------------------------------------------------

TEST(StopGradient, ForwardIdentity) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tensor y = stop_gradient(x);
  EXPECT_EQ(y.data(), x.data());
  EXPECT_FALSE(y.requires_grad());
}

TEST(StopGradient, BlocksBackwardCompletely) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum_all(stop_gradient(x)));
  // bitwise zero, not merely small
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(StopGradient, MixedProductRoutesOnlyThroughLiveFactor) {
  Tensor x = Tensor::from({2}, {2, 5}, true);
  Tensor y = Tensor::from({2}, {3, 7}, true);
  backward(sum_all(mul(x, stop_gradient(y))));
  EXPECT_EQ(x.grad(), (std::vector<double>{3, 7}));
  for (double g : y.grad()) EXPECT_EQ(g, 0.0);
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

TEST(Structural, ConcatVectors) {
  Tensor c = concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})}, 0);
  EXPECT_EQ(c.data(), (std::vector<double>{1, 2, 3}));
}

TEST(Structural, MeanOverAxis) {
  Tensor m = mean_over_axis(Tensor::from({2, 2}, {1, 3, 5, 7}), 0);
  EXPECT_EQ(m.data(), (std::vector<double>{3, 5}));
}

TEST(Structural, SplitThenConcatRoundTrip) {
  Rng rng(53);
  for (int t = 0; t < 100; ++t) {
    Tensor x = random_tensor({4, 6}, rng, false);
    std::size_t axis = rng.randint(2);
    std::size_t parts = (axis == 0) ? 2 : 3;
    Tensor back = concat(split(x, axis, parts), axis);
    EXPECT_EQ(back.data(), x.data());  // bitwise
  }
}

TEST(Structural, ReshapePermuteRoundTripBitwise) {
  Rng rng(59);
  for (int t = 0; t < 100; ++t) {
    Tensor x = random_tensor({2, 3, 4}, rng, false);
    Tensor y = permute(x, {2, 0, 1});
    Tensor back = permute(y, {1, 2, 0});
    EXPECT_EQ(back.data(), x.data());
    Tensor r = reshape(reshape(x, {24}), {2, 3, 4});
    EXPECT_EQ(r.data(), x.data());
  }
}

TEST(Structural, PermuteMatchesManualTranspose) {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = permute(x, {1, 0});
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.data(), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST(Structural, GradientsRouteAdditively) {
  Rng rng(61);
  Tensor x = random_tensor({2, 3, 4}, rng);
  auto build = [&]() {
    Tensor p = permute(x, {1, 2, 0});
    Tensor r = reshape(p, {12, 2});
    Tensor halves = concat(split(r, 0, 3), 0);
    return mean_over_axis(halves, 1);
  };
  Rng wr(33);
  backward(weighted_sum(build(), wr));
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(33);
    return weighted_sum(build(), w).value();
  };
  EXPECT_TRUE(finite_diff_check(f, params, 1e-5, 1e-5).pass);
}

TEST(Structural, SliceAndRowvecGradients) {
  Rng rng(67);
  Tensor x = random_tensor({3, 8}, rng);
  Tensor v = random_tensor({4}, rng);
  auto build = [&]() { return mul_rowvec(add_rowvec(slice(x, 1, 2, 4), v), v); };
  Rng wr(44);
  backward(weighted_sum(build(), wr));
  std::vector<Parameter> params{{x, "x"}, {v, "v"}};
  auto f = [&]() {
    NoGradGuard ng;
    Rng w(44);
    return weighted_sum(build(), w).value();
  };
  EXPECT_TRUE(finite_diff_check(f, params, 1e-5, 1e-5).pass);
}

TEST(Structural, EmbeddingSelectGathersAndScatters) {
  Tensor table = Tensor::from({3, 2}, {10, 11, 20, 21, 30, 31}, true);
  Tensor sel = embedding_select(table, {2, 0, 2});
  EXPECT_EQ(sel.data(), (std::vector<double>{30, 31, 10, 11, 30, 31}));
  backward(sum_all(sel));
  EXPECT_EQ(table.grad(), (std::vector<double>{1, 1, 0, 0, 2, 2}));
}

TEST(Structural, CyclicShiftRoundTrip) {
  Rng rng(71);
  for (int t = 0; t < 100; ++t) {
    Tensor x = random_tensor({2, 4, 4, 3}, rng, false);
    long long dy = static_cast<long long>(rng.randint(7)) - 3;
    long long dx = static_cast<long long>(rng.randint(7)) - 3;
    Tensor back = cyclic_shift(cyclic_shift(x, dy, dx), -dy, -dx);
    EXPECT_EQ(back.data(), x.data());
  }
}

TEST(Structural, CyclicShiftIndexingConvention) {
  // content moves up-left by one under a (-1,-1) shift: (0,0) lands at (3,3)
  Tensor x = Tensor::zeros({1, 4, 4, 1});
  x.data()[0] = 9.0;
  Tensor y = cyclic_shift(x, -1, -1);
  EXPECT_DOUBLE_EQ(y.data()[(3 * 4 + 3)], 9.0);
  Tensor z = cyclic_shift(x, 0, 0);
  EXPECT_EQ(z.data(), x.data());
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  Tensor p = Tensor::from({4}, {1, 2, 3, 4}, true);
  backward(sum_all(p));
  EXPECT_EQ(p.grad(), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Backward, HalfSquaredNormGivesParameter) {
  Tensor p = Tensor::from({3}, {1.5, -2.0, 0.5}, true);
  backward(scale(sum_all(mul(p, p)), 0.5));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad()[i], p[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor p = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(add(p, p)), ContractError);
}

TEST(Backward, TwoSweepsAccumulateExactlyTwice) {
  Rng rng(73);
  Tensor x = random_tensor({5}, rng);
  Tensor loss = sum_all(gelu(x));  // single path into x: accumulation is exact
  backward(loss);
  std::vector<double> g1 = x.grad();
  backward(loss);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(x.grad()[i], 2.0 * g1[i]);
}

TEST(Backward, TwoSweepsAccumulateOnSharedInput) {
  // x feeds two ops; per-path contributions still sum, up to rounding
  Rng rng(73);
  Tensor x = random_tensor({5}, rng);
  Tensor loss = sum_all(mul(sigmoid(x), x));
  backward(loss);
  std::vector<double> g1 = x.grad();
  backward(loss);
  for (std::size_t i = 0; i < g1.size(); ++i)
    EXPECT_NEAR(x.grad()[i], 2.0 * g1[i], 1e-15 * std::fabs(g1[i]));
}

TEST(Backward, DiamondGraphAccumulatesBothPaths) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  Tensor y = mul(x, x);  // x reused: d/dx = 2x
  backward(sum_all(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, UnreachableParameterKeepsZeroGrad) {
  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  backward(sum_all(used));
  EXPECT_EQ(unused.grad(), (std::vector<double>{0, 0}));
}

// ---------------------------------------------------------------------------
// finite_diff_check
// ---------------------------------------------------------------------------

TEST(FiniteDiffCheck, QuadraticAnalytic) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    return mul(x, x).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-7);
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.worst_difference, 6.0, 1e-8);
}

TEST(FiniteDiffCheck, SigmoidDotAtRandomPoint) {
  Rng rng(79);
  Tensor w = random_tensor({6}, rng);
  Tensor v = random_tensor({6}, rng);
  auto build = [&]() { return sum_all(sigmoid(sum_all(mul(w, v)))); };
  backward(build());
  std::vector<Parameter> params{{w, "w"}, {v, "v"}};
  auto f = [&]() {
    NoGradGuard ng;
    return build().value();
  };
  EXPECT_TRUE(finite_diff_check(f, params, 1e-5, 1e-5).pass);
}

TEST(FiniteDiffCheck, StopGradientPathsExcludedByPinning) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  backward(sum_all(stop_gradient(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);

  // raw difference is nonzero...
  double h = 1e-5;
  auto raw = [&](double dx) {
    NoGradGuard ng;
    Tensor shifted = Tensor::from({2}, {x[0] + dx, x[1]});
    return sum_all(stop_gradient(shifted)).value();
  };
  double raw_fd = (raw(h) - raw(-h)) / (2 * h);
  EXPECT_NEAR(raw_fd, 1.0, 1e-6);

  // ...so a correct check evaluates f with the detached value pinned
  Tensor pinned = stop_gradient(x);
  std::vector<Parameter> params{{x, "x"}};
  auto f = [&]() {
    NoGradGuard ng;
    return sum_all(pinned).value();
  };
  auto rep = finite_diff_check(f, params, 1e-5, 1e-9);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.max_rel_err, 0.0);
}

TEST(FiniteDiffCheck, RandomCompositeProperty) {
  // gradient of every differentiable op in one composite, 100 random instances
  Rng rng(83);
  for (int t = 0; t < 100; ++t) {
    Tensor a = random_tensor({2, 6}, rng);
    Tensor b = random_tensor({6, 3}, rng);
    std::uint64_t wseed = rng.randint(1u << 20);
    auto build = [&]() {
      Tensor m = matmul(gelu(a), b);
      Tensor s = softmax(m, 1);
      Tensor n = layer_normalize(add(m, s), 1);
      return l2_normalize(n);
    };
    Rng wr(wseed);
    backward(weighted_sum(build(), wr));
    std::vector<Parameter> params{{a, "a"}, {b, "b"}};
    auto f = [&]() {
      NoGradGuard ng;
      Rng w(wseed);
      return weighted_sum(build(), w).value();
    };
    auto rep = finite_diff_check(f, params, 1e-5, 1e-5);
    ASSERT_TRUE(rep.pass) << "instance " << t << " err " << rep.max_rel_err << " at "
                          << rep.worst_param << "[" << rep.worst_index << "]";
    a.zero_grad();
    b.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// KTEN file format
// ---------------------------------------------------------------------------

TEST(KtenIo, RoundTripBitwise) {
  Rng rng(89);
  std::string path = ::testing::TempDir() + "t.kten";
  for (int t = 0; t < 100; ++t) {
    Tensor x = random_tensor({3, 2, 5}, rng, false);
    save_tensor(path, x);
    Tensor y = load_tensor(path);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(y.data(), x.data());
  }
}

TEST(KtenIo, TruncationReportsOffset) {
  std::string path = ::testing::TempDir() + "trunc.kten";
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  save_tensor(path, x);
  // chop the last 4 bytes
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
  }
  EXPECT_THROW(load_tensor(path), FormatError);
}

TEST(KtenIo, BadMagicAndVersionRejected) {
  std::string path = ::testing::TempDir() + "bad.kten";
  {
    std::ofstream out(path, std::ios::binary);
    out.write("NOPE", 4);
  }
  EXPECT_THROW(load_tensor(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    out.write("KTEN", 4);
    char v[4] = {9, 0, 0, 0};
    out.write(v, 4);
  }
  try {
    load_tensor(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    EXPECT_EQ(e.offset, 4u);
  }
}

TEST(KtenIo, TrailingBytesRejected) {
  std::string path = ::testing::TempDir() + "trail.kten";
  Tensor x = Tensor::from({2}, {1, 2});
  save_tensor(path, x);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put(0);
  }
  EXPECT_THROW(load_tensor(path), FormatError);
}

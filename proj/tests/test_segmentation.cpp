// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "segalign/segmentation.hpp"
#include "test_util.hpp"

using namespace segalign;
using segalign::testing::direct_kernel_cost;

namespace {

LatentSequence scalar_sequence(std::initializer_list<double> values) {
  LatentSequence v;
  v.vectors.resize(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double x : values) v.vectors(i++, 0) = x;
  return v;
}

using Spans = std::vector<std::pair<int, int>>;

}  // namespace

TEST(UniformSegment, Examples) {
  EXPECT_EQ(uniform_segment(12, 3).spans, (Spans{{0, 4}, {4, 8}, {8, 12}}));
  EXPECT_EQ(uniform_segment(10, 3).spans, (Spans{{0, 4}, {4, 7}, {7, 10}}));
  EXPECT_THROW(uniform_segment(3, 5), Error);
  EXPECT_THROW(uniform_segment(3, 0), Error);
}

TEST(UniformSegment, PartitionsWithBalancedLengths) {
  for (int n = 1; n <= 40; ++n) {
    for (int a = 1; a <= std::min(n, 6); ++a) {
      const auto b = uniform_segment(n, a);
      EXPECT_NO_THROW(b.validate(n));
      int lo = n, hi = 0;
      for (auto [s, e] : b.spans) {
        lo = std::min(lo, e - s);
        hi = std::max(hi, e - s);
      }
      EXPECT_LE(hi - lo, 1);
    }
  }
}

TEST(Boundaries, CutsAndValidation) {
  const auto b = SegmentBoundaries::from_cuts({3, 7}, 10);
  EXPECT_EQ(b.spans, (Spans{{0, 3}, {3, 7}, {7, 10}}));
  EXPECT_EQ(b.cuts(), (std::vector<int>{3, 7}));
  EXPECT_THROW(SegmentBoundaries::from_cuts({3, 3}, 10), Error);
  EXPECT_THROW(SegmentBoundaries::from_cuts({11}, 10), Error);
  EXPECT_THROW((SegmentBoundaries{{{0, 2}, {3, 5}}}.validate(5)), Error);
  EXPECT_EQ(boundaries_from_json(nlohmann::json::parse(to_json(b).dump())), b);
  EXPECT_EQ(to_json(b).dump(), "[[0,3],[3,7],[7,10]]");
}

TEST(KernelCost, PrefixSumsMatchDirectFormula) {
  Rng rng(3);
  const Matrix x = segalign::testing::random_matrix(11, 3, rng);
  KernelSpanCost cost(x, 0.8);
  for (int s = 0; s < 11; ++s)
    for (int e = s + 1; e <= 11; ++e) EXPECT_NEAR(cost(s, e), direct_kernel_cost(x, s, e, 0.8), 1e-10);
}

TEST(KernelCpd, StepSequenceCutsAtChange) {
  const auto x = scalar_sequence({0, 0, 0, 5, 5, 5});
  const auto b = kernel_cpd_segment(x, 2);
  EXPECT_EQ(b.spans, (Spans{{0, 3}, {3, 6}}));
  EXPECT_EQ(segalign::testing::best_single_cut(x.vectors, median_bandwidth(x.vectors)), 3);
  EXPECT_EQ(kernel_cpd_segment(x, 2, 1.0).cuts(), (std::vector<int>{3}));
}

TEST(KernelCpd, ConstantSequenceTakesLowestCut) {
  const auto x = scalar_sequence({2, 2, 2, 2, 2});
  EXPECT_EQ(kernel_cpd_segment(x, 2).cuts(), (std::vector<int>{1}));
  EXPECT_EQ(kernel_cpd_segment(x, 3).cuts(), (std::vector<int>{1, 2}));
  EXPECT_EQ(median_bandwidth(x.vectors), 1.0);
}

TEST(KernelCpd, SingleSegmentAndErrors) {
  const auto x = scalar_sequence({1, 4, 2});
  EXPECT_EQ(kernel_cpd_segment(x, 1).spans, (Spans{{0, 3}}));
  EXPECT_EQ(kernel_cpd_segment(x, 3).spans, (Spans{{0, 1}, {1, 2}, {2, 3}}));
  EXPECT_THROW(kernel_cpd_segment(x, 4), Error);
  EXPECT_THROW(kernel_cpd_segment(x, 2, 0.0), Error);
}

TEST(KernelCpd, MatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = rng.uniform_int(1, 12);
    const int a = rng.uniform_int(1, std::min(4, n));
    const int d = rng.uniform_int(1, 3);
    LatentSequence x{segalign::testing::random_matrix(n, d, rng)};
    // quantize some trials to force exact ties
    if (trial % 3 == 0) x.vectors = x.vectors.array().round();
    const auto dp = kernel_cpd_solve(x, a);
    const auto bf = brute_force_kernel_segment(x, a);
    EXPECT_EQ(dp.objective, bf.objective) << "trial " << trial;
    EXPECT_EQ(dp.boundaries, bf.boundaries) << "trial " << trial;
  }
}

TEST(KernelCpd, InvariantToFeaturePermutation) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    LatentSequence x{segalign::testing::random_matrix(14, 4, rng)};
    LatentSequence y{x.vectors(Eigen::all, std::vector<int>{2, 0, 3, 1})};
    EXPECT_EQ(kernel_cpd_segment(x, 3, 1.3), kernel_cpd_segment(y, 3, 1.3));
  }
}

TEST(BruteForce, Bounds) {
  const auto x = scalar_sequence({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  EXPECT_THROW(brute_force_kernel_segment(x, 2), Error);
  const auto y = scalar_sequence({0, 1, 2, 3, 4, 5});
  EXPECT_THROW(brute_force_kernel_segment(y, 5), Error);
  EXPECT_EQ(brute_force_kernel_segment(y, 1).boundaries.spans, (Spans{{0, 6}}));
  EXPECT_EQ(brute_force_kernel_segment(scalar_sequence({3, 1, 2}), 3).boundaries.spans,
            (Spans{{0, 1}, {1, 2}, {2, 3}}));
}

TEST(ClusterDp, FourWindowExample) {
  CostMatrix c;
  c.costs.resize(4, 2);
  c.costs << 0, 9, 0, 9, 9, 0, 9, 0;
  const auto r = cluster_dp_windows(c, 2);
  EXPECT_EQ(r.boundaries.cuts(), (std::vector<int>{2}));
  EXPECT_EQ(r.primitives, (std::vector<int>{0, 1}));
  EXPECT_EQ(r.objective, 0.0);
  const auto bf = brute_force_cluster_windows(c, 2);
  EXPECT_EQ(bf.boundaries, r.boundaries);
  EXPECT_EQ(bf.primitives, r.primitives);
}

TEST(ClusterDp, SingleRunAndTies) {
  CostMatrix c;
  c.costs.resize(3, 3);
  c.costs << 1, 5, 0, 1, 0, 4, 1, 0, 4;
  const auto r = cluster_dp_windows(c, 1);
  EXPECT_EQ(r.primitives, (std::vector<int>{0}));  // column sums 3, 5, 8
  EXPECT_EQ(r.objective, 3.0);

  CostMatrix flat;
  flat.costs = Matrix::Constant(5, 2, 2.0);
  const auto t = cluster_dp_windows(flat, 3);
  EXPECT_EQ(t.boundaries.cuts(), (std::vector<int>{1, 2}));
  EXPECT_EQ(t.primitives, (std::vector<int>{0, 0, 0}));
  EXPECT_THROW(cluster_dp_windows(flat, 6), Error);
}

TEST(ClusterDp, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 150; ++trial) {
    const int nw = rng.uniform_int(1, 12);
    const int a = rng.uniform_int(1, std::min(4, nw));
    const int kp = rng.uniform_int(1, 4);
    CostMatrix c;
    c.costs.resize(nw, kp);
    for (Eigen::Index i = 0; i < c.costs.size(); ++i)
      c.costs.data()[i] = trial % 2 ? static_cast<double>(rng.uniform_int(0, 3)) : rng.uniform(0, 10);
    const auto dp = cluster_dp_windows(c, a);
    const auto bf = brute_force_cluster_windows(c, a);
    EXPECT_EQ(dp.objective, bf.objective) << "trial " << trial;
    EXPECT_EQ(dp.boundaries, bf.boundaries) << "trial " << trial;
    EXPECT_EQ(dp.primitives, bf.primitives) << "trial " << trial;
  }
}

TEST(PrimitiveLibrary, AlternatingRegimes) {
  LatentSequence x = scalar_sequence({1, 1, 1, 1, 7, 7, 7, 7, 1, 1, 7, 7});
  const auto lib = build_primitive_library({x}, 1, 1, 2, 5);
  std::vector<double> centers{lib.centers(0, 0), lib.centers(1, 0)};
  std::sort(centers.begin(), centers.end());
  EXPECT_DOUBLE_EQ(centers[0], 1.0);
  EXPECT_DOUBLE_EQ(centers[1], 7.0);
  const auto again = build_primitive_library({x}, 1, 1, 2, 5);
  EXPECT_EQ(again.centers, lib.centers);
  EXPECT_THROW(build_primitive_library({x}, 4, 1, 10, 5), Error);
}

TEST(PrimitiveLibrary, DistinctWindowsGiveZeroCost) {
  LatentSequence x = scalar_sequence({0, 1, 0, 1, 0, 1, 0});
  const auto lib = build_primitive_library({x}, 2, 1, 2, 1);
  const auto c = window_cost_matrix(x, lib);
  EXPECT_EQ(c.costs.rows(), 6);
  for (int w = 0; w < 6; ++w) EXPECT_EQ(c.costs.row(w).minCoeff(), 0.0);
}

TEST(PrimitiveLibrary, SlidingWindowsFlattenConsecutiveRows) {
  LatentSequence x;
  x.vectors.resize(5, 2);
  x.vectors << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const Matrix w = sliding_windows(x, 3, 2);
  ASSERT_EQ(w.rows(), 2);
  ASSERT_EQ(w.cols(), 6);
  EXPECT_EQ(w.row(0), (Eigen::RowVectorXd(6) << 0, 1, 2, 3, 4, 5).finished());
  EXPECT_EQ(w.row(1), (Eigen::RowVectorXd(6) << 4, 5, 6, 7, 8, 9).finished());
  EXPECT_EQ(window_count(2, 3, 1), 0);
}

TEST(ClusterDp, TokenSequenceWithTwoRegimes) {
  LatentSequence x = scalar_sequence({0, 0, 0, 0, 0, 0, 4, 4, 4, 4, 4, 4});
  const auto lib = build_primitive_library({x}, 2, 1, 3, 2);
  const auto b = cluster_dp_segment(x, lib, 2);
  // pure windows: [0,5) low, [6,11) high; the straddling window 5 is the cut
  EXPECT_NEAR(b.cuts()[0], 6, 1);
  EXPECT_THROW(cluster_dp_segment(scalar_sequence({0, 1}), lib, 2), Error);
}

TEST(ClusterDp, LibraryJsonRoundTrip) {
  Rng rng(2);
  PrimitiveLibrary lib{segalign::testing::random_matrix(3, 4, rng), 2, 1};
  const auto back = primitive_library_from_json(nlohmann::json::parse(to_json(lib).dump()));
  EXPECT_EQ(back.centers, lib.centers);
  EXPECT_EQ(back.window, 2);
  EXPECT_THROW(primitive_library_from_json(nlohmann::json::parse(R"({"window":1,"stride":1,"rows":2,"cols":2,"centers":[1]})")),
               Error);
}

TEST(SegError, Examples) {
  const auto pred = SegmentBoundaries::from_cuts({3, 7}, 10);
  const auto truth = SegmentBoundaries::from_cuts({4, 6}, 10);
  const auto e = seg_error_eval(pred, truth);
  EXPECT_DOUBLE_EQ(e.mean, 1.0);
  EXPECT_DOUBLE_EQ(e.std, 0.0);
  const auto same = seg_error_eval(truth, truth);
  EXPECT_EQ(same.mean, 0.0);
  EXPECT_EQ(same.std, 0.0);
  const auto single = seg_error_eval(SegmentBoundaries{{{0, 5}}}, SegmentBoundaries{{{0, 5}}});
  EXPECT_EQ(single.mean, 0.0);
  EXPECT_EQ(single.std, 0.0);
  EXPECT_THROW(seg_error_eval(pred, SegmentBoundaries{{{0, 10}}}), Error);
}

TEST(SegError, PoolsAcrossCorpus) {
  // errors {1,1} and {3}: mean 5/3, population std sqrt(8/9)
  const std::vector<SegmentBoundaries> pred{SegmentBoundaries::from_cuts({3, 7}, 10),
                                            SegmentBoundaries::from_cuts({5}, 8)};
  const std::vector<SegmentBoundaries> truth{SegmentBoundaries::from_cuts({4, 6}, 10),
                                             SegmentBoundaries::from_cuts({2}, 8)};
  const auto e = seg_error_eval(pred, truth);
  EXPECT_NEAR(e.mean, 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(e.std, std::sqrt(8.0 / 9.0), 1e-12);
}

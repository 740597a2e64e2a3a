// Copyright 2026 The SGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "sgt/saliency.hpp"
#include "test_util.hpp"

using namespace sgt;
using sgt::testing::random_matrix;

TEST_CASE("single centered fixation peaks at the center pixel") {
  const std::vector<FixationRecord> f{{"img", 7.5, 7.5, 100}};
  const SaliencyMap m = fixations_to_heatmap(f, 15, 15, 2.0, false);
  Eigen::Index r = 0, c = 0;
  CHECK(m.maxCoeff(&r, &c) == 1.0);
  CHECK(r == 7);
  CHECK(c == 7);
}

TEST_CASE("two equal distant fixations give two equal maxima") {
  const std::vector<FixationRecord> f{{"img", 3.5, 3.5, 50}, {"img", 16.5, 12.5, 50}};
  const SaliencyMap m = fixations_to_heatmap(f, 16, 20, 1.5, true);
  CHECK(std::abs(m(3, 3) - m(12, 16)) < 1e-9);
  CHECK(std::abs(m(3, 3) - 1.0) < 1e-9);
}

TEST_CASE("one fixation matches direct kernel evaluation") {
  const double sigma = 1.0;
  const std::vector<FixationRecord> f{{"img", 3.2, 2.7, 1}};
  const SaliencyMap m = fixations_to_heatmap(f, 7, 7, sigma, false);
  Matrix k(7, 7);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) {
      const double dx = c + 0.5 - 3.2, dy = r + 0.5 - 2.7;
      k(r, c) = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (2 * std::numbers::pi * sigma * sigma);
    }
  CHECK((m - k / k.maxCoeff()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("splat mass equals the fixation weight away from the border") {
  // Before max-normalization each splat integrates to its weight; compare
  // the ratio of two well-separated splats with weights 1 and 3.
  const std::vector<FixationRecord> f{{"img", 10.5, 10.5, 1}, {"img", 40.5, 40.5, 3}};
  const SaliencyMap m = fixations_to_heatmap(f, 52, 52, 2.0, true);
  const double a = m.block(0, 0, 26, 26).sum(), b = m.block(26, 26, 26, 26).sum();
  CHECK(b / a == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("fixation validation and empty input") {
  CHECK_THROWS_AS(fixations_to_heatmap({}, 4, 4, 1.0, false), EmptyMapError);
  const std::vector<FixationRecord> outside{{"img", 4.0, 1.0, 1}};
  CHECK_THROWS_AS(fixations_to_heatmap(outside, 4, 4, 1.0, false), ConfigError);
  const std::vector<FixationRecord> negative{{"img", 1.0, 1.0, -1}};
  CHECK_THROWS_AS(fixations_to_heatmap(negative, 4, 4, 1.0, false), ConfigError);
  const std::vector<FixationRecord> ok{{"img", 1.0, 1.0, 1}};
  CHECK_THROWS_AS(fixations_to_heatmap(ok, 4, 4, 0.0, false), ConfigError);
}

TEST_CASE("fixation CSV round trip and malformed input") {
  const std::vector<FixationRecord> f{{"a", 1.25, 2.5, 180}, {"b", 0.1, 0.30000000000000004, 0}};
  std::stringstream buf;
  write_fixations_csv(buf, f);
  CHECK(read_fixations_csv(buf) == f);
  std::stringstream bad_header("id,x,y\n");
  CHECK_THROWS_AS(read_fixations_csv(bad_header), FormatError);
  std::stringstream bad_row("image_id,x,y,duration_ms\na,1,oops,3\n");
  CHECK_THROWS_AS(read_fixations_csv(bad_row), FormatError);
}

TEST_CASE("pool_to_grid block means") {
  CHECK(pool_to_grid(Matrix::Constant(6, 6, 0.4), 3, 3) == Matrix::Constant(3, 3, 0.4));
  Matrix m(4, 4);
  for (int i = 0; i < 16; ++i) m.data()[i] = i;
  Matrix expect(2, 2);
  expect << (0 + 1 + 4 + 5) / 4.0, (2 + 3 + 6 + 7) / 4.0, (8 + 9 + 12 + 13) / 4.0, (10 + 11 + 14 + 15) / 4.0;
  CHECK(pool_to_grid(m, 2, 2) == expect);
  std::mt19937_64 rng(1);
  const Matrix r = random_matrix(8, 12, rng, 0, 1);
  CHECK(std::abs(pool_to_grid(pool_to_grid(r, 4, 6), 1, 1)(0, 0) - r.mean()) < 1e-12);
  CHECK_THROWS_AS(pool_to_grid(r, 3, 3), DimensionError);
}

TEST_CASE("top_m_mask examples") {
  Matrix g(1, 4);
  g << 0.9, 0.1, 0.5, 0.3;
  const SaliencyMask m = top_m_mask(g, 2);
  CHECK(m.keep == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(m.kept_indices == std::vector<int>{0, 2});
  CHECK(top_m_mask(g, 4).keep == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(top_m_mask(Matrix::Constant(2, 3, 0.2), 3).kept_indices == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(top_m_mask(g, 0), ConfigError);
  CHECK_THROWS_AS(top_m_mask(g, 5), ConfigError);
  CHECK(SaliencyMask::all(3).kept_indices == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(SaliencyMask::from_indices(3, {}), ConfigError);
  CHECK_THROWS_AS(SaliencyMask::from_indices(3, {1, 1}), ConfigError);
  CHECK_THROWS_AS(SaliencyMask::from_indices(3, {3}), ConfigError);
}

TEST_CASE("kld examples") {
  std::mt19937_64 rng(2);
  // With P == Q every cell contributes Q*log(eps + Q/(Q+eps)) ~ eps*(Q - 1),
  // so kld(P,P) ~ -eps*(N-1): within 1e-6 of zero only for N <= 11.
  const Matrix small = random_matrix(3, 3, rng, 0.01, 1);
  CHECK(std::abs(kld(small, small)) <= 1e-6);
  const Matrix p = random_matrix(8, 8, rng, 0.01, 1);
  CHECK(kld(p, p) <= 1e-6);
  CHECK(kld(p, p) > -1e-5);
  CHECK(kld(p, p) == doctest::Approx(-1e-7 * 63).epsilon(1e-3));

  const double eps = 1e-7;
  const Matrix uniform = Matrix::Constant(2, 2, 1.0);
  Matrix onehot = Matrix::Zero(2, 2);
  onehot(0, 1) = 5.0;
  // Q is one-hot, so only its nonzero cell contributes: 1 * log(eps + 1 / (0.25 + eps)).
  CHECK(kld(uniform, onehot) == doctest::Approx(std::log(eps + 1.0 / (0.25 + eps))).epsilon(1e-14));
  // The reverse direction sums four uniform terms against a near-zero prediction.
  double reverse = 0.75 * std::log(eps + 0.25 / (0.0 + eps)) + 0.25 * std::log(eps + 0.25 / (1.0 + eps));
  CHECK(kld(onehot, uniform) == doctest::Approx(reverse).epsilon(1e-14));
  CHECK(kld(uniform, onehot) != doctest::Approx(kld(onehot, uniform)));
  CHECK_THROWS_AS(kld(uniform, Matrix::Zero(2, 2)), EmptyMapError);
  CHECK_THROWS_AS(kld(uniform, Matrix::Ones(3, 2)), DimensionError);
}

TEST_CASE("cc examples") {
  std::mt19937_64 rng(3);
  const Matrix p = random_matrix(6, 4, rng);
  CHECK(std::abs(cc(p, p) - 1.0) < 1e-12);
  CHECK(std::abs(cc(p, (2.5 * p.array() + 0.3).matrix()) - 1.0) < 1e-12);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 2, 1, 4, 5;
  // Means 2.5 and 3; deviations (-1.5,-.5,.5,1.5) and (-1,-2,1,2).
  const double cov = 1.5 + 1.0 + 0.5 + 3.0;
  const double expect = cov / std::sqrt(5.0 * 10.0);
  CHECK(cc(a, b) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(cc(a, b) == doctest::Approx(cc(b, a)).epsilon(1e-15));
  CHECK_THROWS_AS(cc(a, Matrix::Constant(2, 2, 1.0)), std::domain_error);
}

TEST_CASE("nss examples") {
  std::mt19937_64 rng(4);
  const Matrix p = random_matrix(4, 5, rng, 0, 1);
  std::vector<FixationRecord> every;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) every.push_back({"img", c + 0.5, r + 0.5, 1});
  CHECK(std::abs(nss(p, every)) < 1e-9);

  Eigen::Index r = 0, c = 0;
  const double mx = p.maxCoeff(&r, &c);
  const double mu = p.mean();
  const double sd = std::sqrt((p.array() - mu).square().sum() / p.size());
  const std::vector<FixationRecord> one{{"img", c + 0.2, r + 0.9, 1}};
  CHECK(nss(p, one) == doctest::Approx((mx - mu) / sd).epsilon(1e-14));
  CHECK(std::abs(nss((p.array() + 7.0).matrix(), one) - nss(p, one)) < 1e-9);
  CHECK(std::abs(nss((3.0 * p.array() + 1.0).matrix(), one) - nss(p, one)) < 1e-9);
  const std::vector<FixationRecord> none{{"img", 99, 99, 1}};
  CHECK_THROWS_AS(nss(p, none), EmptyMapError);
  CHECK_THROWS_AS(nss(Matrix::Ones(2, 2), one), std::domain_error);
}

TEST_CASE("saliency helpers work in single precision") {
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g(1, 4);
  g << 0.9f, 0.1f, 0.5f, 0.3f;
  CHECK(top_m_mask(g, 2).kept_indices == std::vector<int>{0, 2});
  CHECK(std::abs(cc(g, g) - 1.0f) < 1e-6f);
  CHECK(pool_to_grid(g, 1, 2)(0, 0) == doctest::Approx(0.5f));
}

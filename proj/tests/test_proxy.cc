// Copyright 2026 The ScalePose Authors
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

#include <random>

#include "doctest.h"
#include "oracles.h"
#include "scalepose/proxy.h"

using namespace scalepose;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd Vec(std::initializer_list<double> values) {
  VectorXd v(values.size());
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

VectorXd RandomVector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  return VectorXd::NullaryExpr(n, [&]() { return nd(rng); });
}

// Composite over 10 coordinates mixing all leaf variants.
ProxyMap MixedComposite(std::mt19937_64& rng) {
  MatrixXd a = MatrixXd::NullaryExpr(2, 2, [&]() {
    return std::normal_distribution<double>()(rng);
  });
  MatrixXd basis(3, 2);
  basis << 1, 0, 1, 0.5, 1, 1;
  std::vector<CompositeBlock> blocks;
  blocks.push_back({{0, 4}, ProxyMap::Identity(2)});
  blocks.push_back({{1, 2, 9}, ProxyMap::Selection({0, 2}, Vec({0, 7.5, 0}))});
  blocks.push_back({{3, 5}, ProxyMap::Affine(a, Vec({0.1, -0.2}))});
  blocks.push_back({{6, 7, 8}, ProxyMap::ChainBasis({0, 1, 2}, basis,
                                                    VectorXd::Zero(3))});
  return ProxyMap::Composite(10, std::move(blocks));
}

}  // namespace

TEST_SUITE("proxy") {

TEST_CASE("apply examples") {
  CHECK(Apply(ProxyMap::Identity(2), Vec({1, 2})) == Vec({1, 2}));

  const ProxyMap sel = ProxyMap::Selection({0}, Vec({0.0, 1.0}));
  CHECK(Apply(sel, Vec({0.3})) == Vec({0.3, 1.0}));

  const ProxyMap uniform = ProxyMap::ChainBasis({0, 1, 2, 3}, MatrixXd::Ones(4, 1),
                                                VectorXd::Zero(4));
  CHECK(Apply(uniform, Vec({0.2})) == Vec({0.2, 0.2, 0.2, 0.2}));

  CHECK_THROWS_AS(Apply(ProxyMap::Identity(2), Vec({1})), std::invalid_argument);
}

TEST_CASE("jacobian examples") {
  CHECK(Jacobian(ProxyMap::Identity(3)) == MatrixXd::Identity(3, 3));
  MatrixXd a(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  CHECK(Jacobian(ProxyMap::Affine(a, VectorXd::Zero(3))) == a);

  const ProxyMap sel = ProxyMap::Selection({2, 0}, VectorXd::Zero(3));
  MatrixXd expect = MatrixXd::Zero(3, 2);
  expect(2, 0) = 1;
  expect(0, 1) = 1;
  CHECK(Jacobian(sel) == expect);
}

TEST_CASE("composite maps are affine and cover every coordinate once") {
  std::mt19937_64 rng(4);
  const ProxyMap map = MixedComposite(rng);
  CHECK(map.ny() == 10);
  CHECK(map.np() == 2 + 2 + 2 + 2);

  const VectorXd p1 = RandomVector(rng, map.np());
  const VectorXd p2 = RandomVector(rng, map.np());
  CHECK(Jacobian(map, p1) == Jacobian(map, p2));

  const MatrixXd fd = oracle::CentralDifference(
      [&](const VectorXd& p) { return Apply(map, p); }, p1, 1e-3);
  const MatrixXd j = Jacobian(map);
  CHECK((fd - j).cwiseAbs().maxCoeff() / std::max(1.0, j.cwiseAbs().maxCoeff()) <
        1e-8);

  const VectorXd dp = RandomVector(rng, map.np());
  CHECK((Apply(map, p1 + dp) - Apply(map, p1) - j * dp).cwiseAbs().maxCoeff() <
        1e-12);

  // frozen entry of the selection block lands in y[2]
  CHECK(Apply(map, p1)[2] == 7.5);

  // overlapping or missing rows are rejected
  std::vector<CompositeBlock> overlap;
  overlap.push_back({{0, 1}, ProxyMap::Identity(2)});
  overlap.push_back({{1}, ProxyMap::Identity(1)});
  CHECK_THROWS_AS(ProxyMap::Composite(2, overlap), std::invalid_argument);
  std::vector<CompositeBlock> missing;
  missing.push_back({{0}, ProxyMap::Identity(1)});
  CHECK_THROWS_AS(ProxyMap::Composite(2, missing), std::invalid_argument);
}

TEST_CASE("selection round trip and projection") {
  std::mt19937_64 rng(9);
  const ProxyMap sel = ProxyMap::Selection({1, 3}, RandomVector(rng, 5));
  const VectorXd p = RandomVector(rng, 2);
  const VectorXd y = Apply(sel, p);
  CHECK(y[1] == p[0]);
  CHECK(y[3] == p[1]);
  CHECK((Project(sel, y) - p).norm() < 1e-14);

  const ProxyMap map = MixedComposite(rng);
  const VectorXd q = RandomVector(rng, map.np());
  CHECK((Apply(map, Project(map, Apply(map, q))) - Apply(map, q)).norm() < 1e-10);
}

TEST_CASE("rebase takes held coordinates from the state") {
  std::mt19937_64 rng(10);
  const ProxyMap sel = ProxyMap::Selection({0, 2}, VectorXd::Zero(4));
  const VectorXd y = RandomVector(rng, 4);
  const ProxyMap rebased = Rebase(sel, y);
  CHECK((Apply(rebased, Project(sel, y)) - y).norm() < 1e-14);

  std::vector<int> chain = {1, 2, 3, 4};
  const ProxyMap spine =
      MakeSpineComposite(6, {chain}, SpineMode::kClassical, 2, 2);
  const VectorXd z = RandomVector(rng, 6);
  const VectorXd rz = Apply(Rebase(spine, z), Project(spine, z));
  // coordinates outside the chain and the exposed chain DoFs are exact
  CHECK(rz[0] == doctest::Approx(z[0]));
  CHECK(rz[5] == doctest::Approx(z[5]));
  CHECK(rz[1] == doctest::Approx(z[1]));
  CHECK(rz[3] == doctest::Approx(z[3]));
}

TEST_CASE("spine maps") {
  std::vector<int> chain8 = {0, 1, 2, 3, 4, 5, 6, 7};
  const ProxyMap poly = MakeSpineMap(chain8, SpineMode::kPoly, 1, 3);
  CHECK(poly.np() == 2);
  const MatrixXd j = Jacobian(poly);
  for (int i = 0; i < 8; ++i) {
    CHECK(j(i, 0) == 1.0);
    CHECK(j(i, 1) == doctest::Approx(i / 7.0).epsilon(1e-15));
  }

  const ProxyMap nopoly = MakeSpineMap(chain8, SpineMode::kNoPoly, 2, 3);
  CHECK(nopoly.np() == 8);
  CHECK(Jacobian(nopoly) == MatrixXd::Identity(8, 8));

  const ProxyMap classical = MakeSpineMap(chain8, SpineMode::kClassical, 2, 3);
  CHECK(classical.np() == 3);
  const VectorXd y = Apply(classical, Vec({1, 2, 3}));
  int zeros = 0;
  for (int i = 0; i < 8; ++i) zeros += y[i] == 0.0;
  CHECK(zeros == 5);

  CHECK_THROWS_AS(MakeSpineMap({}, SpineMode::kPoly, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(MakeSpineMap({0, 1}, SpineMode::kPoly, 2, 1),
                  std::invalid_argument);
  CHECK(ParseSpineMode("nopoly") == SpineMode::kNoPoly);
  CHECK_THROWS(ParseSpineMode("cubic"));
}

TEST_CASE("spine composite keeps other coordinates free") {
  const ProxyMap map =
      MakeSpineComposite(10, {{2, 3, 4, 5}, {6, 7, 8, 9}}, SpineMode::kPoly, 2, 3);
  CHECK(map.ny() == 10);
  CHECK(map.np() == 2 + 3 + 3);
  const MatrixXd j = Jacobian(map);
  CHECK(j(0, 0) == 1.0);
  CHECK(j(1, 1) == 1.0);
}

}  // TEST_SUITE

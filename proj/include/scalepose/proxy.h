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

#ifndef SCALEPOSE_PROXY_H_
#define SCALEPOSE_PROXY_H_

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace scalepose {

// Proxy maps p -> y. Every variant is affine in p, so the Jacobian is a
// constant matrix.

struct IdentityMap {
  int dim = 0;
};

// Exposes y[active[j]] = p[j]; every other coordinate is held at
// frozen_values (entries at active positions are ignored).
struct SelectionMap {
  std::vector<int> active;
  Eigen::VectorXd frozen_values;
};

struct AffineMap {
  Eigen::MatrixXd matrix;  // ny by np
  Eigen::VectorXd offset;  // ny
};

// y[target[j]] = (basis * p)[j]; all other coordinates come from base.
struct ChainBasisMap {
  std::vector<int> target;
  Eigen::MatrixXd basis;  // target.size() by np
  Eigen::VectorXd base;
};

struct CompositeBlock;

// Block-diagonal assembly; each block owns a disjoint slice of y and a
// contiguous slice of p (in block order).
struct CompositeMap {
  int dim = 0;
  std::vector<CompositeBlock> blocks;
};

class ProxyMap {
 public:
  using Variant = std::variant<IdentityMap, SelectionMap, AffineMap,
                               ChainBasisMap, CompositeMap>;

  ProxyMap();
  // Throws std::invalid_argument if the variant's invariants fail.
  explicit ProxyMap(Variant variant);

  static ProxyMap Identity(int dim);
  static ProxyMap Selection(std::vector<int> active,
                            Eigen::VectorXd frozen_values);
  static ProxyMap Affine(Eigen::MatrixXd matrix, Eigen::VectorXd offset);
  static ProxyMap ChainBasis(std::vector<int> target, Eigen::MatrixXd basis,
                             Eigen::VectorXd base);
  static ProxyMap Composite(int dim, std::vector<CompositeBlock> blocks);

  const Variant& variant() const { return variant_; }
  int ny() const { return ny_; }
  int np() const { return np_; }
  std::string KindName() const;

 private:
  Variant variant_;
  int ny_ = 0;
  int np_ = 0;
};

struct CompositeBlock {
  std::vector<int> rows;  // y indices written by this block
  ProxyMap map;           // map.ny() == rows.size()
};

// y = Phi(p). Throws std::invalid_argument on dimension mismatch.
Eigen::VectorXd Apply(const ProxyMap& map, const Eigen::VectorXd& p);

// J_Phi (ny by np); constant in p for every provided variant.
Eigen::MatrixXd Jacobian(const ProxyMap& map, const Eigen::VectorXd& p);
Eigen::MatrixXd Jacobian(const ProxyMap& map);

// Least-squares p with Phi(p) closest to y over the coordinates the map
// controls. Exact for states produced by Apply.
Eigen::VectorXd Project(const ProxyMap& map, const Eigen::VectorXd& y);

// Copy of map whose held coordinates (Selection frozen values, ChainBasis
// base, Affine offset on uncontrolled rows) are taken from y, so that
// Apply(Rebase(map, y), Project(map, y)) reproduces y where representable.
ProxyMap Rebase(const ProxyMap& map, const Eigen::VectorXd& y);

enum class SpineMode { kPoly, kNoPoly, kClassical };
const char* SpineModeName(SpineMode mode);
SpineMode ParseSpineMode(const std::string& name);

// Map over a single bending-axis chain of chain.size() DoFs (block-local
// rows 0..n-1; the caller places it into y with a composite block).
//   poly:      ChainBasis, column d at DoF j is xi_j^d, xi_j = j / (n - 1)
//   nopoly:    Identity
//   classical: Selection exposing the first DoF of each of segment_count
//              contiguous groups, the rest frozen at zero
// Throws std::invalid_argument on an empty chain or degree + 1 > n.
ProxyMap MakeSpineMap(const std::vector<int>& chain, SpineMode mode,
                      int degree, int segment_count);

// Composite over all of y: a leading identity block for the coordinates not
// named by any chain, then one spine block per chain.
ProxyMap MakeSpineComposite(int ny, const std::vector<std::vector<int>>& chains,
                            SpineMode mode, int degree, int segment_count);

}  // namespace scalepose

#endif  // SCALEPOSE_PROXY_H_

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

#include "scalepose/proxy.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/QR>

namespace scalepose {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void Require(bool condition, const char* what) {
  if (!condition) throw std::invalid_argument(what);
}

// Checks that `indices` are distinct and inside [0, dim).
bool DistinctInRange(const std::vector<int>& indices, int dim) {
  std::vector<bool> seen(dim, false);
  for (int i : indices) {
    if (i < 0 || i >= dim || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

Eigen::VectorXd Gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = v[idx[j]];
  return out;
}

}  // namespace

ProxyMap::ProxyMap() : variant_(IdentityMap{}) {}

ProxyMap::ProxyMap(Variant variant) : variant_(std::move(variant)) {
  std::visit(
      Overloaded{
          [this](const IdentityMap& m) {
            Require(m.dim >= 0, "identity map: negative dimension");
            ny_ = np_ = m.dim;
          },
          [this](const SelectionMap& m) {
            ny_ = static_cast<int>(m.frozen_values.size());
            np_ = static_cast<int>(m.active.size());
            Require(DistinctInRange(m.active, ny_),
                    "selection map: active indices must be distinct and in "
                    "range");
          },
          [this](const AffineMap& m) {
            Require(m.offset.size() == m.matrix.rows(),
                    "affine map: offset length differs from matrix rows");
            ny_ = static_cast<int>(m.matrix.rows());
            np_ = static_cast<int>(m.matrix.cols());
          },
          [this](const ChainBasisMap& m) {
            ny_ = static_cast<int>(m.base.size());
            np_ = static_cast<int>(m.basis.cols());
            Require(m.basis.rows() == static_cast<int>(m.target.size()),
                    "chain basis: basis rows differ from target count");
            Require(DistinctInRange(m.target, ny_),
                    "chain basis: targets must be distinct and in range");
          },
          [this](const CompositeMap& m) {
            ny_ = m.dim;
            np_ = 0;
            std::vector<int> all;
            for (const CompositeBlock& block : m.blocks) {
              Require(block.map.ny() == static_cast<int>(block.rows.size()),
                      "composite: block map size differs from its rows");
              all.insert(all.end(), block.rows.begin(), block.rows.end());
              np_ += block.map.np();
            }
            Require(static_cast<int>(all.size()) == m.dim &&
                        DistinctInRange(all, m.dim),
                    "composite: blocks must cover every coordinate exactly "
                    "once");
          },
      },
      variant_);
}

ProxyMap ProxyMap::Identity(int dim) { return ProxyMap(IdentityMap{dim}); }

ProxyMap ProxyMap::Selection(std::vector<int> active,
                             Eigen::VectorXd frozen_values) {
  return ProxyMap(SelectionMap{std::move(active), std::move(frozen_values)});
}

ProxyMap ProxyMap::Affine(Eigen::MatrixXd matrix, Eigen::VectorXd offset) {
  return ProxyMap(AffineMap{std::move(matrix), std::move(offset)});
}

ProxyMap ProxyMap::ChainBasis(std::vector<int> target, Eigen::MatrixXd basis,
                              Eigen::VectorXd base) {
  return ProxyMap(
      ChainBasisMap{std::move(target), std::move(basis), std::move(base)});
}

ProxyMap ProxyMap::Composite(int dim, std::vector<CompositeBlock> blocks) {
  return ProxyMap(CompositeMap{dim, std::move(blocks)});
}

std::string ProxyMap::KindName() const {
  return std::visit(Overloaded{
                        [](const IdentityMap&) { return "identity"; },
                        [](const SelectionMap&) { return "selection"; },
                        [](const AffineMap&) { return "affine"; },
                        [](const ChainBasisMap&) { return "chain_basis"; },
                        [](const CompositeMap&) { return "composite"; },
                    },
                    variant_);
}

Eigen::VectorXd Apply(const ProxyMap& map, const Eigen::VectorXd& p) {
  if (p.size() != map.np()) {
    throw std::invalid_argument("proxy apply: p has " +
                                std::to_string(p.size()) + " entries, map has " +
                                std::to_string(map.np()));
  }
  return std::visit(
      Overloaded{
          [&](const IdentityMap&) -> Eigen::VectorXd { return p; },
          [&](const SelectionMap& m) -> Eigen::VectorXd {
            Eigen::VectorXd y = m.frozen_values;
            for (std::size_t j = 0; j < m.active.size(); ++j) {
              y[m.active[j]] = p[j];
            }
            return y;
          },
          [&](const AffineMap& m) -> Eigen::VectorXd {
            return m.matrix * p + m.offset;
          },
          [&](const ChainBasisMap& m) -> Eigen::VectorXd {
            Eigen::VectorXd y = m.base;
            const Eigen::VectorXd values = m.basis * p;
            for (std::size_t j = 0; j < m.target.size(); ++j) {
              y[m.target[j]] = values[j];
            }
            return y;
          },
          [&](const CompositeMap& m) -> Eigen::VectorXd {
            Eigen::VectorXd y(m.dim);
            int col = 0;
            for (const CompositeBlock& block : m.blocks) {
              const Eigen::VectorXd sub =
                  Apply(block.map, p.segment(col, block.map.np()));
              for (std::size_t j = 0; j < block.rows.size(); ++j) {
                y[block.rows[j]] = sub[j];
              }
              col += block.map.np();
            }
            return y;
          },
      },
      map.variant());
}

Eigen::MatrixXd Jacobian(const ProxyMap& map) {
  return std::visit(
      Overloaded{
          [&](const IdentityMap& m) -> Eigen::MatrixXd {
            return Eigen::MatrixXd::Identity(m.dim, m.dim);
          },
          [&](const SelectionMap& m) -> Eigen::MatrixXd {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(map.ny(), map.np());
            for (std::size_t c = 0; c < m.active.size(); ++c) {
              j(m.active[c], c) = 1.0;
            }
            return j;
          },
          [&](const AffineMap& m) -> Eigen::MatrixXd { return m.matrix; },
          [&](const ChainBasisMap& m) -> Eigen::MatrixXd {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(map.ny(), map.np());
            for (std::size_t r = 0; r < m.target.size(); ++r) {
              j.row(m.target[r]) = m.basis.row(r);
            }
            return j;
          },
          [&](const CompositeMap& m) -> Eigen::MatrixXd {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(map.ny(), map.np());
            int col = 0;
            for (const CompositeBlock& block : m.blocks) {
              const Eigen::MatrixXd sub = Jacobian(block.map);
              for (std::size_t r = 0; r < block.rows.size(); ++r) {
                j.row(block.rows[r]).segment(col, sub.cols()) = sub.row(r);
              }
              col += block.map.np();
            }
            return j;
          },
      },
      map.variant());
}

Eigen::MatrixXd Jacobian(const ProxyMap& map, const Eigen::VectorXd& p) {
  if (p.size() != map.np()) {
    throw std::invalid_argument("proxy jacobian: dimension mismatch");
  }
  return Jacobian(map);
}

Eigen::VectorXd Project(const ProxyMap& map, const Eigen::VectorXd& y) {
  if (y.size() != map.ny()) {
    throw std::invalid_argument("proxy project: dimension mismatch");
  }
  return std::visit(
      Overloaded{
          [&](const IdentityMap&) -> Eigen::VectorXd { return y; },
          [&](const SelectionMap& m) -> Eigen::VectorXd {
            return Gather(y, m.active);
          },
          [&](const AffineMap& m) -> Eigen::VectorXd {
            return m.matrix.completeOrthogonalDecomposition().solve(y -
                                                                    m.offset);
          },
          [&](const ChainBasisMap& m) -> Eigen::VectorXd {
            return m.basis.completeOrthogonalDecomposition().solve(
                Gather(y, m.target));
          },
          [&](const CompositeMap& m) -> Eigen::VectorXd {
            Eigen::VectorXd p(map.np());
            int col = 0;
            for (const CompositeBlock& block : m.blocks) {
              p.segment(col, block.map.np()) =
                  Project(block.map, Gather(y, block.rows));
              col += block.map.np();
            }
            return p;
          },
      },
      map.variant());
}

ProxyMap Rebase(const ProxyMap& map, const Eigen::VectorXd& y) {
  if (y.size() != map.ny()) {
    throw std::invalid_argument("proxy rebase: dimension mismatch");
  }
  return std::visit(
      Overloaded{
          [&](const IdentityMap&) { return map; },
          [&](const SelectionMap& m) {
            return ProxyMap::Selection(m.active, y);
          },
          [&](const AffineMap&) { return map; },
          [&](const ChainBasisMap& m) {
            return ProxyMap::ChainBasis(m.target, m.basis, y);
          },
          [&](const CompositeMap& m) {
            std::vector<CompositeBlock> blocks;
            blocks.reserve(m.blocks.size());
            for (const CompositeBlock& block : m.blocks) {
              blocks.push_back(
                  {block.rows, Rebase(block.map, Gather(y, block.rows))});
            }
            return ProxyMap::Composite(m.dim, std::move(blocks));
          },
      },
      map.variant());
}

const char* SpineModeName(SpineMode mode) {
  switch (mode) {
    case SpineMode::kPoly:
      return "poly";
    case SpineMode::kNoPoly:
      return "nopoly";
    case SpineMode::kClassical:
      return "classical";
  }
  return "unknown";
}

SpineMode ParseSpineMode(const std::string& name) {
  if (name == "poly") return SpineMode::kPoly;
  if (name == "nopoly") return SpineMode::kNoPoly;
  if (name == "classical") return SpineMode::kClassical;
  throw std::invalid_argument("unknown spine mode: " + name);
}

ProxyMap MakeSpineMap(const std::vector<int>& chain, SpineMode mode,
                      int degree, int segment_count) {
  const int n = static_cast<int>(chain.size());
  if (n == 0) throw std::invalid_argument("spine map: empty chain");
  if (degree < 0) throw std::invalid_argument("spine map: negative degree");
  if (segment_count < 1) {
    throw std::invalid_argument("spine map: segment_count must be >= 1");
  }

  switch (mode) {
    case SpineMode::kPoly: {
      if (degree + 1 > n) {
        throw std::invalid_argument("spine map: degree + 1 exceeds chain length");
      }
      Eigen::MatrixXd basis(n, degree + 1);
      for (int j = 0; j < n; ++j) {
        const double xi = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
        double power = 1.0;
        for (int d = 0; d <= degree; ++d) {
          basis(j, d) = power;
          power *= xi;
        }
      }
      std::vector<int> target(n);
      for (int j = 0; j < n; ++j) target[j] = j;
      return ProxyMap::ChainBasis(std::move(target), std::move(basis),
                                  Eigen::VectorXd::Zero(n));
    }
    case SpineMode::kNoPoly:
      return ProxyMap::Identity(n);
    case SpineMode::kClassical: {
      const int groups = std::min(segment_count, n);
      std::vector<int> active;
      for (int g = 0; g < groups; ++g) {
        // group g spans [g*n/groups, (g+1)*n/groups)
        active.push_back(static_cast<int>(
            (static_cast<long>(g) * n + groups - 1) / groups));
      }
      return ProxyMap::Selection(std::move(active), Eigen::VectorXd::Zero(n));
    }
  }
  throw std::invalid_argument("spine map: unknown mode");
}

ProxyMap MakeSpineComposite(int ny, const std::vector<std::vector<int>>& chains,
                            SpineMode mode, int degree, int segment_count) {
  std::vector<CompositeBlock> blocks;
  std::vector<bool> used(ny, false);
  for (const std::vector<int>& chain : chains) {
    for (int i : chain) {
      if (i < 0 || i >= ny || used[i]) {
        throw std::invalid_argument("spine composite: bad chain index");
      }
      used[i] = true;
    }
    blocks.push_back({chain, MakeSpineMap(chain, mode, degree, segment_count)});
  }
  std::vector<int> rest;
  for (int i = 0; i < ny; ++i) {
    if (!used[i]) rest.push_back(i);
  }
  if (!rest.empty()) {
    const int n = static_cast<int>(rest.size());
    blocks.insert(blocks.begin(), {std::move(rest), ProxyMap::Identity(n)});
  }
  return ProxyMap::Composite(ny, std::move(blocks));
}

}  // namespace scalepose

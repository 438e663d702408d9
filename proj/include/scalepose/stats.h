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

#ifndef SCALEPOSE_STATS_H_
#define SCALEPOSE_STATS_H_

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace scalepose {

// Nearest-rank percentile: the ceil(pct/100 * N)-th smallest value.
inline double NearestRank(std::vector<double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  long rank = static_cast<long>(std::ceil(pct / 100.0 * n - 1e-9));
  rank = std::clamp(rank, 1L, static_cast<long>(values.size()));
  return values[rank - 1];
}

// Conventional median (mean of the two middle values for even counts).
inline double Median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

inline double Mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of empty set");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace scalepose

#endif  // SCALEPOSE_STATS_H_

// Copyright 2026 The libu-lab Authors.
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

#ifndef LIBU_TESTS_ORACLES_H_
#define LIBU_TESTS_ORACLES_H_

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace libu::testing {

// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t BruteForceLcs(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) {
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << a.size()); ++mask) {
    std::size_t j = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) {
        ok = false;
      } else {
        ++j;
        ++len;
      }
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

// AUC through the rank-sum statistic with midranks for ties.
inline double MannWhitneyAuc(const std::vector<double>& members,
                             const std::vector<double>& nonmembers) {
  std::vector<std::pair<double, int>> all;
  for (double v : members) all.push_back({v, 0});
  for (double v : nonmembers) all.push_back({v, 1});
  std::sort(all.begin(), all.end());
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(nonmembers.size());
  const double n0 = static_cast<double>(members.size());
  return (rank_sum - n1 * (n1 + 1) / 2) / (n0 * n1);
}

}  // namespace libu::testing

#endif  // LIBU_TESTS_ORACLES_H_

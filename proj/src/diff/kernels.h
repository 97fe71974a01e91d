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

#ifndef LIBU_SRC_DIFF_KERNELS_H_
#define LIBU_SRC_DIFF_KERNELS_H_

#include <cstddef>

namespace libu::diff::kernels {

// All matrices are row-major and results are accumulated into `c`.

// c[m x n] += a[m x k] * b[k x n]
void GemmNN(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c);
// c[m x n] += a[m x k] * b[n x k]^T
void GemmNT(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c);
// c[m x n] += a[k x m]^T * b[k x n]
void GemmTN(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c);

}  // namespace libu::diff::kernels

#endif  // LIBU_SRC_DIFF_KERNELS_H_

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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kernels.h"
#include "libu/diff/tape.h"

namespace libu::diff {
namespace {

[[noreturn]] void ShapeMismatch(const char* op, const Tensor& a,
                                const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              a.ShapeString() + " vs " + b.ShapeString());
}

Tape& SameTape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) +
                                ": operands recorded on different tapes");
  }
  return *a.tape();
}

Tape& TapeOf(Var a, const char* op) {
  if (!a.valid()) {
    throw std::invalid_argument(std::string(op) + ": unbound operand");
  }
  return *a.tape();
}

void RequireMatrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                t.ShapeString());
  }
}

// Row-wise log-sum-exp with the row maximum factored out.
double LogSumExp(const double* row, std::size_t n) {
  double max_v = row[0];
  for (std::size_t j = 1; j < n; ++j) max_v = std::max(max_v, row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(row[j] - max_v);
  return max_v + std::log(sum);
}

void SoftmaxRow(const double* in, double* out, std::size_t n) {
  const double lse = LogSumExp(in, n);
  for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(in[j] - lse);
}

std::size_t MaskCount(std::span<const unsigned char> mask) {
  return static_cast<std::size_t>(std::count_if(
      mask.begin(), mask.end(), [](unsigned char m) { return m != 0; }));
}

}  // namespace

Var MatMul(Var a, Var b) {
  Tape& tape = SameTape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireMatrix("matmul", av);
  RequireMatrix("matmul", bv);
  if (av.cols() != bv.rows()) ShapeMismatch("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::GemmNN(m, k, n, av.data(), bv.data(), out.data());
  const int ia = a.id(), ib = b.id();
  return tape.Record(std::move(out), {ia, ib}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      kernels::GemmNT(m, n, k, g.data(), t.value(ib).data(), t.grad(ia).data());
    }
    if (t.requires_grad(ib)) {
      kernels::GemmTN(k, m, n, t.value(ia).data(), g.data(), t.grad(ib).data());
    }
  });
}

Var MatMulTransposed(Var a, Var b) {
  Tape& tape = SameTape(a, b, "matmul_transposed");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireMatrix("matmul_transposed", av);
  RequireMatrix("matmul_transposed", bv);
  if (av.cols() != bv.cols()) ShapeMismatch("matmul_transposed", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  kernels::GemmNT(m, k, n, av.data(), bv.data(), out.data());
  const int ia = a.id(), ib = b.id();
  return tape.Record(std::move(out), {ia, ib}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      kernels::GemmNN(m, n, k, g.data(), t.value(ib).data(), t.grad(ia).data());
    }
    if (t.requires_grad(ib)) {
      kernels::GemmTN(n, m, k, g.data(), t.value(ia).data(), t.grad(ib).data());
    }
  });
}

Var Add(Var a, Var b) {
  Tape& tape = SameTape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) ShapeMismatch("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return tape.Record(std::move(out), {ia, ib}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (int id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& dst = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Var AddBias(Var a, Var bias) {
  Tape& tape = SameTape(a, bias, "add_bias");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  RequireMatrix("add_bias", av);
  if (bv.size() != av.cols() || bv.rows() != 1)
    ShapeMismatch("add_bias", av, bv);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
  }
  const int ia = a.id(), ib = bias.id();
  return tape.Record(std::move(out), {ia, ib}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& da = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& db = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) db[j] += g(i, j);
      }
    }
  });
}

Var Scale(Var a, double factor) {
  Tape& tape = TapeOf(a, "scale");
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const int ia = a.id();
  return tape.Record(std::move(out), {ia}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += factor * g[i];
  });
}

Var Gelu(Var a) {
  Tape& tape = TapeOf(a, "gelu");
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  const int ia = a.id();
  return tape.Record(std::move(out), {ia}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& da = t.grad(ia);
    const double inv_sqrt_2pi =
        0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      da[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

namespace {

// Shared by the plain and causal softmax. Row r covers columns [0, width(r)).
template <typename Width>
Var SoftmaxImpl(Var a, const char* op, Width width) {
  Tape& tape = TapeOf(a, op);
  const Tensor& av = a.value();
  RequireMatrix(op, av);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    SoftmaxRow(av.data() + i * n, out.data() + i * n, width(i));
  }
  const int ia = a.id();
  return tape.Record(std::move(out), {ia}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t w = width(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < w; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < w; ++j) da(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

}  // namespace

Var SoftmaxRows(Var a) {
  const std::size_t n = a.valid() ? a.value().cols() : 0;
  return SoftmaxImpl(a, "softmax_rows", [n](std::size_t) { return n; });
}

Var CausalSoftmaxRows(Var a) {
  if (a.valid() && a.value().rows() != a.value().cols()) {
    ShapeMismatch("causal_softmax_rows", a.value(), a.value());
  }
  return SoftmaxImpl(a, "causal_softmax_rows",
                     [](std::size_t row) { return row + 1; });
}

Var LayerNormRows(Var a, Var gain, Var bias, double epsilon) {
  Tape& tape = SameTape(a, gain, "layer_norm_rows");
  SameTape(a, bias, "layer_norm_rows");
  const Tensor& av = a.value();
  RequireMatrix("layer_norm_rows", av);
  const std::size_t m = av.rows(), n = av.cols();
  if (gain.value().size() != n)
    ShapeMismatch("layer_norm_rows", av, gain.value());
  if (bias.value().size() != n)
    ShapeMismatch("layer_norm_rows", av, bias.value());

  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out({m, n});
  // Normalized rows and inverse deviations are kept for the backward pass.
  Tensor normalized({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += av(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = av(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      normalized(i, j) = (av(i, j) - mean) * inv_std[i];
      out(i, j) = normalized(i, j) * gv[j] + bv[j];
    }
  }
  const int ia = a.id(), ig = gain.id(), ib = bias.id();
  return tape.Record(std::move(out), {ia, ig, ib},
                     [=, xhat = std::move(normalized),
                      inv_std = std::move(inv_std)](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& gv = t.value(ig);
                       if (t.requires_grad(ig)) {
                         Tensor& dg = t.grad(ig);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             dg[j] += g(i, j) * xhat(i, j);
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& db = t.grad(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) db[j] += g(i, j);
                       }
                       if (t.requires_grad(ia)) {
                         Tensor& da = t.grad(ia);
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           double sum_d = 0.0, sum_dx = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = g(i, j) * gv[j];
                             sum_d += d;
                             sum_dx += d * xhat(i, j);
                           }
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = g(i, j) * gv[j];
                             da(i, j) +=
                                 inv_std[i] * (d - sum_d * inv_n -
                                               xhat(i, j) * sum_dx * inv_n);
                           }
                         }
                       }
                     });
}

Var EmbeddingLookup(Var table, std::span<const int> ids) {
  Tape& tape = TapeOf(table, "embedding_lookup");
  const Tensor& tv = table.value();
  RequireMatrix("embedding_lookup", tv);
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: no ids");
  const std::size_t n = tv.cols();
  std::vector<int> rows(ids.begin(), ids.end());
  Tensor out({rows.size(), n});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t] < 0 || static_cast<std::size_t>(rows[t]) >= tv.rows()) {
      throw std::invalid_argument(
          "embedding_lookup: id " + std::to_string(rows[t]) +
          " out of range for table " + tv.ShapeString());
    }
    std::copy_n(tv.data() + rows[t] * n, n, out.data() + t * n);
  }
  const int it = table.id();
  return tape.Record(std::move(out), {it},
                     [=, rows = std::move(rows)](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       Tensor& dt = t.grad(it);
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                         for (std::size_t j = 0; j < n; ++j) {
                           dt(rows[r], j) += g(r, j);
                         }
                       }
                     });
}

Var SliceColumns(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = TapeOf(a, "slice_columns");
  const Tensor& av = a.value();
  RequireMatrix("slice_columns", av);
  if (count == 0 || begin + count > av.cols()) {
    throw std::invalid_argument(
        "slice_columns: range [" + std::to_string(begin) + ", " +
        std::to_string(begin + count) + ") outside " + av.ShapeString());
  }
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.data() + i * n + begin, count, out.data() + i * count);
  }
  const int ia = a.id();
  return tape.Record(std::move(out), {ia}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) da(i, begin + j) += g(i, j);
  });
}

Var ConcatColumns(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_columns: no operands");
  Tape& tape = TapeOf(parts[0], "concat_columns");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    SameTape(parts[0], p, "concat_columns");
    RequireMatrix("concat_columns", p.value());
    if (p.value().rows() != m) {
      ShapeMismatch("concat_columns", parts[0].value(), p.value());
    }
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(pv.data() + i * pv.cols(), pv.cols(),
                  out.data() + i * total + offset);
    }
    offset += pv.cols();
  }
  return tape.Record(std::move(out), ids, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& dp = t.grad(ids[k]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) dp(i, j) += g(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var SumOfSquares(Var a) {
  Tape& tape = TapeOf(a, "sum_of_squares");
  double sum = 0.0;
  for (double v : a.value().values()) sum += v * v;
  const int ia = a.id();
  return tape.Record(Tensor::Scalar(sum), {ia}, [=](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const Tensor& x = t.value(ia);
    Tensor& da = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) da[i] += 2.0 * g * x[i];
  });
}

Var CrossEntropyLoss(Var logits, std::span<const int> targets,
                     std::span<const unsigned char> mask) {
  Tape& tape = TapeOf(logits, "cross_entropy_loss");
  const Tensor& z = logits.value();
  RequireMatrix("cross_entropy_loss", z);
  const std::size_t rows = z.rows(), vocab = z.cols();
  if (targets.size() != rows || mask.size() != rows) {
    throw std::invalid_argument(
        "cross_entropy_loss: logits " + z.ShapeString() + " vs " +
        std::to_string(targets.size()) + " targets and " +
        std::to_string(mask.size()) + " mask entries");
  }
  const std::size_t count = MaskCount(mask);
  if (count == 0) {
    throw std::invalid_argument(
        "cross_entropy_loss: mask selects no positions");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<unsigned char> msk(mask.begin(), mask.end());
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!msk[t]) continue;
    if (tgt[t] < 0 || static_cast<std::size_t>(tgt[t]) >= vocab) {
      throw std::invalid_argument("cross_entropy_loss: target " +
                                  std::to_string(tgt[t]) + " outside vocab " +
                                  std::to_string(vocab));
    }
    const double* row = z.data() + t * vocab;
    total += LogSumExp(row, vocab) - row[tgt[t]];
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  const int il = logits.id();
  return tape.Record(
      Tensor::Scalar(total * inv_count), {il},
      [=, tgt = std::move(tgt), msk = std::move(msk)](Tape& t, int self) {
        const double g = t.grad(self)[0] * inv_count;
        const Tensor& zz = t.value(il);
        Tensor& dz = t.grad(il);
        std::vector<double> p(vocab);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!msk[r]) continue;
          SoftmaxRow(zz.data() + r * vocab, p.data(), vocab);
          p[tgt[r]] -= 1.0;
          for (std::size_t j = 0; j < vocab; ++j) dz(r, j) += g * p[j];
        }
      });
}

Var KlToReference(Var logits, const Tensor& reference,
                  std::span<const unsigned char> mask) {
  Tape& tape = TapeOf(logits, "kl_to_reference");
  const Tensor& z = logits.value();
  RequireMatrix("kl_to_reference", z);
  if (reference.shape() != z.shape())
    ShapeMismatch("kl_to_reference", z, reference);
  const std::size_t rows = z.rows(), vocab = z.cols();
  if (mask.size() != rows) {
    throw std::invalid_argument("kl_to_reference: mask length " +
                                std::to_string(mask.size()) + " vs logits " +
                                z.ShapeString());
  }
  const std::size_t count = MaskCount(mask);
  if (count == 0) {
    throw std::invalid_argument("kl_to_reference: mask selects no positions");
  }
  std::vector<unsigned char> msk(mask.begin(), mask.end());
  // log p - log q per masked row, plus each row's KL, for the backward pass.
  Tensor log_ratio({rows, vocab});
  std::vector<double> row_kl(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!msk[r]) continue;
    const double* zr = z.data() + r * vocab;
    const double* qr = reference.data() + r * vocab;
    const double lse_p = LogSumExp(zr, vocab);
    const double lse_q = LogSumExp(qr, vocab);
    double kl = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) {
      const double log_p = zr[j] - lse_p;
      const double ratio = log_p - (qr[j] - lse_q);
      log_ratio(r, j) = ratio;
      kl += std::exp(log_p) * ratio;
    }
    row_kl[r] = kl;
    total += kl;
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  const int il = logits.id();
  return tape.Record(Tensor::Scalar(total * inv_count), {il},
                     [=, msk = std::move(msk), log_ratio = std::move(log_ratio),
                      row_kl = std::move(row_kl)](Tape& t, int self) {
                       const double g = t.grad(self)[0] * inv_count;
                       const Tensor& zz = t.value(il);
                       Tensor& dz = t.grad(il);
                       std::vector<double> p(vocab);
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (!msk[r]) continue;
                         SoftmaxRow(zz.data() + r * vocab, p.data(), vocab);
                         for (std::size_t j = 0; j < vocab; ++j) {
                           dz(r, j) += g * p[j] * (log_ratio(r, j) - row_kl[r]);
                         }
                       }
                     });
}

}  // namespace libu::diff

// Copyright 2026 The snvs Authors
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

#include "snvs/autodiff/ops.hpp"

#include <cmath>
#include <string>

#include "snvs/kernels/kernels.hpp"

namespace snvs::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible operands " + a.shape_string() + " and " + b.shape_string());
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("autodiff: invalid variable");
  return *a.tape();
}

template <typename F, typename G>
Var unary(Var a, F&& forward, G&& derivative) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const int ia = a.id();
  return t.record(std::move(y), {a}, [ia, derivative](Tape& tp, int self) {
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    const Tensor& gy = tp.grad(self);
    Tensor& gx = tp.grad(ia);
    for (std::int64_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * derivative(x[i], y[i]);
  });
}

void add_into(Tensor& dst, const Tensor& src, double s = 1.0) {
  for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

Tensor from_values(std::int64_t rows, std::int64_t cols, std::vector<double> values) {
  return Tensor(rows, cols, std::move(values));
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_fail("matmul", A, B);
  Tensor C(A.rows(), B.cols());
  kernels::gather_gemm({static_cast<int>(A.rows()), 1, nullptr, A.data(), static_cast<int>(A.cols()),
                        static_cast<int>(A.cols()), B.data(), static_cast<int>(B.cols()), C.data(),
                        static_cast<int>(B.cols())});
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(C), {a, b}, [ia, ib](Tape& tp, int self) {
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    const Tensor& G = tp.grad(self);
    const int m = static_cast<int>(A.rows()), k = static_cast<int>(A.cols()), n = static_cast<int>(B.cols());
    if (tp.requires_grad(ia)) {
      const Tensor Bt = transpose_blocks(B, 1);
      kernels::scatter_gemm({m, 1, nullptr, G.data(), n, n, Bt.data(), k, tp.grad(ia).data(), k});
    }
    if (tp.requires_grad(ib)) kernels::outer_accumulate({m, 1, nullptr, A.data(), k, k, G.data(), n, n, tp.grad(ib).data()});
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_fail("add", A, B);
  Tensor C = A;
  add_into(C, B);
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(C), {a, b}, [ia, ib](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(ia)) add_into(tp.grad(ia), G);
    if (tp.requires_grad(ib)) add_into(tp.grad(ib), G);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_fail("sub", A, B);
  Tensor C = A;
  add_into(C, B, -1.0);
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(C), {a, b}, [ia, ib](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(ia)) add_into(tp.grad(ia), G);
    if (tp.requires_grad(ib)) add_into(tp.grad(ib), G, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_fail("mul", A, B);
  Tensor C(A.rows(), A.cols());
  for (std::int64_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(C), {a, b}, [ia, ib](Tape& tp, int self) {
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::int64_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::int64_t i = 0; i < G.size(); ++i) gb[i] += G[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  if (b.rows() != 1 || b.cols() != A.cols()) shape_fail("add_row", A, b);
  Tensor C = A;
  for (std::int64_t r = 0; r < C.rows(); ++r)
    for (std::int64_t c = 0; c < C.cols(); ++c) C(r, c) += b[c];
  const int ia = a.id(), ib = bias.id();
  return t.record(std::move(C), {a, bias}, [ia, ib](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(ia)) add_into(tp.grad(ia), G);
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::int64_t r = 0; r < G.rows(); ++r)
        for (std::int64_t c = 0; c < G.cols(); ++c) gb[c] += G(r, c);
    }
  });
}

Var mul_col(Var a, Var column) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& s = column.value();
  if (s.cols() != 1 || s.rows() != A.rows()) shape_fail("mul_col", A, s);
  Tensor C = A;
  for (std::int64_t r = 0; r < C.rows(); ++r)
    for (std::int64_t c = 0; c < C.cols(); ++c) C(r, c) *= s[r];
  const int ia = a.id(), is = column.id();
  return t.record(std::move(C), {a, column}, [ia, is](Tape& tp, int self) {
    const Tensor& A = tp.value(ia);
    const Tensor& s = tp.value(is);
    const Tensor& G = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::int64_t r = 0; r < G.rows(); ++r)
        for (std::int64_t c = 0; c < G.cols(); ++c) ga(r, c) += G(r, c) * s[r];
    }
    if (tp.requires_grad(is)) {
      Tensor& gs = tp.grad(is);
      for (std::int64_t r = 0; r < G.rows(); ++r)
        for (std::int64_t c = 0; c < G.cols(); ++c) gs[r] += G(r, c) * A(r, c);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const std::int64_t rows = parts[0].rows();
  std::int64_t cols = 0;
  std::vector<std::int64_t> offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor C(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& P = parts[i].value();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < P.cols(); ++c) C(r, offsets[i] + c) = P(r, c);
  }
  std::vector<int> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t.record(std::move(C), parts, [ids, offsets](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      Tensor& gp = tp.grad(ids[i]);
      for (std::int64_t r = 0; r < gp.rows(); ++r)
        for (std::int64_t c = 0; c < gp.cols(); ++c) gp(r, c) += G(r, offsets[i] + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = tape_of(parts[0]);
  const std::int64_t cols = parts[0].cols();
  std::int64_t rows = 0;
  std::vector<std::int64_t> offsets;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Tensor C(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& P = parts[i].value();
    std::copy(P.values().begin(), P.values().end(), C.values().begin() + offsets[i] * cols);
  }
  std::vector<int> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t.record(std::move(C), parts, [ids, offsets, cols](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      Tensor& gp = tp.grad(ids[i]);
      for (std::int64_t j = 0; j < gp.size(); ++j) gp[j] += G[offsets[i] * cols + j];
    }
  });
}

Var slice_cols(Var a, std::int64_t begin, std::int64_t end) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  if (begin < 0 || end > A.cols() || begin > end)
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                     A.shape_string());
  Tensor C(A.rows(), end - begin);
  for (std::int64_t r = 0; r < A.rows(); ++r)
    for (std::int64_t c = begin; c < end; ++c) C(r, c - begin) = A(r, c);
  const int ia = a.id();
  return t.record(std::move(C), {a}, [ia, begin](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::int64_t r = 0; r < G.rows(); ++r)
      for (std::int64_t c = 0; c < G.cols(); ++c) ga(r, c + begin) += G(r, c);
  });
}

Var gather_rows(Var a, std::shared_ptr<const std::vector<std::int32_t>> index) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const auto& idx = *index;
  Tensor C(static_cast<std::int64_t>(idx.size()), A.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    if (idx[r] >= A.rows()) throw ShapeError("gather_rows: index out of range for " + A.shape_string());
    std::copy_n(A.data() + idx[r] * A.cols(), A.cols(), C.data() + static_cast<std::int64_t>(r) * A.cols());
  }
  const int ia = a.id();
  return t.record(std::move(C), {a}, [ia, index](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    const auto& idx = *index;
    const std::int64_t c = G.cols();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      for (std::int64_t j = 0; j < c; ++j) ga(idx[r], j) += G(static_cast<std::int64_t>(r), j);
    }
  });
}

Var scatter_add_rows(Var a, std::shared_ptr<const std::vector<std::int32_t>> index, std::int64_t rows) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const auto& idx = *index;
  if (static_cast<std::int64_t>(idx.size()) != A.rows()) throw ShapeError("scatter_add_rows: index size != rows of " + A.shape_string());
  Tensor C(rows, A.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    if (idx[r] >= rows) throw ShapeError("scatter_add_rows: index out of range");
    for (std::int64_t j = 0; j < A.cols(); ++j) C(idx[r], j) += A(static_cast<std::int64_t>(r), j);
  }
  const int ia = a.id();
  return t.record(std::move(C), {a}, [ia, index](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    const auto& idx = *index;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      for (std::int64_t j = 0; j < G.cols(); ++j) ga(static_cast<std::int64_t>(r), j) += G(idx[r], j);
    }
  });
}

Var weighted_gather(Var a, IndexTablePtr table, std::shared_ptr<const std::vector<double>> weights) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const IndexTable& tb = *table;
  if (static_cast<std::int64_t>(weights->size()) != tb.rows * tb.taps) throw ShapeError("weighted_gather: weight count mismatch");
  const std::int64_t c = A.cols();
  Tensor C(tb.rows, c);
  for (std::int64_t r = 0; r < tb.rows; ++r) {
    double* out = C.data() + r * c;
    for (int k = 0; k < tb.taps; ++k) {
      const std::int32_t src = tb.index[static_cast<std::size_t>(r * tb.taps + k)];
      if (src < 0) continue;
      const double w = (*weights)[static_cast<std::size_t>(r * tb.taps + k)];
      const double* in = A.data() + static_cast<std::int64_t>(src) * c;
      for (std::int64_t j = 0; j < c; ++j) out[j] += w * in[j];
    }
  }
  const int ia = a.id();
  return t.record(std::move(C), {a}, [ia, table, weights](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    const IndexTable& tb = *table;
    const std::int64_t c = G.cols();
    for (std::int64_t r = 0; r < tb.rows; ++r) {
      const double* g = G.data() + r * c;
      for (int k = 0; k < tb.taps; ++k) {
        const std::int32_t src = tb.index[static_cast<std::size_t>(r * tb.taps + k)];
        if (src < 0) continue;
        const double w = (*weights)[static_cast<std::size_t>(r * tb.taps + k)];
        double* dst = ga.data() + static_cast<std::int64_t>(src) * c;
        for (std::int64_t j = 0; j < c; ++j) dst[j] += w * g[j];
      }
    }
  });
}

Var gather_conv(Var a, Var weight, Var bias, IndexTablePtr table) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& W = weight.value();
  const IndexTable& tb = *table;
  const std::int64_t cin = A.cols();
  if (W.rows() != tb.taps * cin) shape_fail("gather_conv", A, W);
  const std::int64_t cout = W.cols();
  if (bias.valid() && (bias.rows() != 1 || bias.cols() != cout)) shape_fail("gather_conv(bias)", W, bias.value());
  Tensor C(tb.rows, cout);
  if (bias.valid()) {
    const Tensor& b = bias.value();
    for (std::int64_t r = 0; r < tb.rows; ++r) std::copy_n(b.data(), cout, C.data() + r * cout);
  }
  kernels::gather_gemm({static_cast<int>(tb.rows), tb.taps, tb.index.data(), A.data(), static_cast<int>(cin),
                        static_cast<int>(cin), W.data(), static_cast<int>(cout), C.data(), static_cast<int>(cout)});
  const int ia = a.id(), iw = weight.id(), ib = bias.valid() ? bias.id() : -1;
  std::vector<Var> parents{a, weight};
  if (bias.valid()) parents.push_back(bias);
  return t.record(std::move(C), parents, [ia, iw, ib, table](Tape& tp, int self) {
    const Tensor& A = tp.value(ia);
    const Tensor& W = tp.value(iw);
    const Tensor& G = tp.grad(self);
    const IndexTable& tb = *table;
    const int cin = static_cast<int>(A.cols()), cout = static_cast<int>(W.cols());
    if (tp.requires_grad(ia)) {
      const Tensor Wt = transpose_blocks(W, tb.taps);
      kernels::scatter_gemm({static_cast<int>(tb.rows), tb.taps, tb.index.data(), G.data(), cout, cout, Wt.data(), cin,
                             tp.grad(ia).data(), cin});
    }
    if (tp.requires_grad(iw))
      kernels::outer_accumulate({static_cast<int>(tb.rows), tb.taps, tb.index.data(), A.data(), cin, cin, G.data(),
                                 cout, cout, tp.grad(iw).data()});
    if (ib >= 0 && tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::int64_t r = 0; r < G.rows(); ++r)
        for (int c = 0; c < cout; ++c) gb[c] += G(r, c);
    }
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  std::vector<unsigned char> pat(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) pat[static_cast<std::size_t>(i)] = x[i] > 0.0;
  tape_of(a).note_branch(pat);
  return unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  const Tensor& x = a.value();
  std::vector<unsigned char> pat(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) pat[static_cast<std::size_t>(i)] = x[i] > 0.0;
  tape_of(a).note_branch(pat);
  return unary(
      a, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      a, [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var exp(Var a) {
  return unary(a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var a) {
  return unary(a, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(Var a) {
  const Tensor& x = a.value();
  std::vector<unsigned char> pat(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) pat[static_cast<std::size_t>(i)] = x[i] >= 0.0;
  tape_of(a).note_branch(pat);
  return unary(a, [](double v) { return std::abs(v); }, [](double v, double) { return v >= 0.0 ? 1.0 : -1.0; });
}

Var clamp(Var a, double lo, double hi) {
  const Tensor& x = a.value();
  std::vector<unsigned char> pat(static_cast<std::size_t>(x.size()));
  for (std::int64_t i = 0; i < x.size(); ++i) pat[static_cast<std::size_t>(i)] = x[i] < lo ? 0 : (x[i] > hi ? 2 : 1);
  tape_of(a).note_branch(pat);
  return unary(
      a, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.id();
  return t.record(Tensor::scalar(s), {a}, [ia](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad(ia);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::int64_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  Tensor C(A.rows(), 1);
  for (std::int64_t r = 0; r < A.rows(); ++r)
    for (std::int64_t c = 0; c < A.cols(); ++c) C[r] += A(r, c);
  const int ia = a.id();
  return t.record(std::move(C), {a}, [ia](Tape& tp, int self) {
    const Tensor& G = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::int64_t r = 0; r < ga.rows(); ++r)
      for (std::int64_t c = 0; c < ga.cols(); ++c) ga(r, c) += G[r];
  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace snvs::ad

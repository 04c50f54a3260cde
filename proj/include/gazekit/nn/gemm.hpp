#pragma once

// Packed, register-blocked double-precision matrix multiply. Single-threaded
// with a fixed summation order, so results are bitwise reproducible.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace gazekit::nn {

enum class Trans { No, Yes };

namespace detail {

constexpr std::size_t kMR = 6;
constexpr std::size_t kNR = 16;
constexpr std::size_t kMC = 96;
constexpr std::size_t kKC = 256;
constexpr std::size_t kNC = 2048;

typedef double v8d __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }

// op(A)[i][k] element accessor for the packing routines.
inline double elem(const double* a, std::size_t ld, Trans t, std::size_t row, std::size_t col) {
  return t == Trans::No ? a[row * ld + col] : a[col * ld + row];
}

inline void pack_a(const double* a, std::size_t lda, Trans ta, std::size_t i0, std::size_t mc,
                   std::size_t k0, std::size_t kc, double* out) {
  for (std::size_t ip = 0; ip < mc; ip += kMR) {
    const std::size_t rows = std::min(kMR, mc - ip);
    for (std::size_t k = 0; k < kc; ++k) {
      for (std::size_t i = 0; i < rows; ++i) out[i] = elem(a, lda, ta, i0 + ip + i, k0 + k);
      for (std::size_t i = rows; i < kMR; ++i) out[i] = 0.0;
      out += kMR;
    }
  }
}

inline void pack_b(const double* b, std::size_t ldb, Trans tb, std::size_t k0, std::size_t kc,
                   std::size_t j0, std::size_t nc, double* out) {
  for (std::size_t jp = 0; jp < nc; jp += kNR) {
    const std::size_t cols = std::min(kNR, nc - jp);
    for (std::size_t k = 0; k < kc; ++k) {
      if (tb == Trans::No && cols == kNR) {
        std::memcpy(out, b + (k0 + k) * ldb + j0 + jp, kNR * sizeof(double));
      } else {
        for (std::size_t j = 0; j < cols; ++j) out[j] = elem(b, ldb, tb, k0 + k, j0 + jp + j);
        for (std::size_t j = cols; j < kNR; ++j) out[j] = 0.0;
      }
      out += kNR;
    }
  }
}

// C[rows x cols] += Apanel * Bpanel over kc.
inline void micro_kernel(std::size_t kc, const double* ap, const double* bp, double* c,
                         std::size_t ldc, std::size_t rows, std::size_t cols) {
  v8d acc[kMR][2] = {};
  for (std::size_t k = 0; k < kc; ++k) {
    const v8d b0 = load8(bp);
    const v8d b1 = load8(bp + 8);
    for (std::size_t i = 0; i < kMR; ++i) {
      const double av = ap[i];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
    ap += kMR;
    bp += kNR;
  }
  if (rows == kMR && cols == kNR) {
    for (std::size_t i = 0; i < kMR; ++i) {
      double* row = c + i * ldc;
      store8(row, load8(row) + acc[i][0]);
      store8(row + 8, load8(row + 8) + acc[i][1]);
    }
    return;
  }
  alignas(64) double tmp[kMR][kNR];
  for (std::size_t i = 0; i < kMR; ++i) {
    store8(tmp[i], acc[i][0]);
    store8(tmp[i] + 8, acc[i][1]);
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) c[i * ldc + j] += tmp[i][j];
}

}  // namespace detail

/// C = beta * C + op(A) * op(B), with op(A) of size M x K and op(B) of size K x N.
/// All matrices are row-major; lda/ldb/ldc are row strides of the stored matrices.
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
                 std::size_t ldc) {
  using namespace detail;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * ldc;
    if (beta == 0.0)
      std::fill(row, row + n, 0.0);
    else if (beta != 1.0)
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
  }
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<double> apack, bpack;
  apack.resize(kMC * kKC);
  bpack.resize(kKC * ((kNC + kNR - 1) / kNR) * kNR);

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      pack_b(b, ldb, tb, pc, kc, jc, nc, bpack.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(a, lda, ta, ic, mc, pc, kc, apack.data());
        for (std::size_t jr = 0; jr < nc; jr += kNR) {
          const std::size_t cols = std::min(kNR, nc - jr);
          const double* bp = bpack.data() + (jr / kNR) * kc * kNR;
          for (std::size_t ir = 0; ir < mc; ir += kMR) {
            const std::size_t rows = std::min(kMR, mc - ir);
            const double* ap = apack.data() + (ir / kMR) * kc * kMR;
            micro_kernel(kc, ap, bp, c + (ic + ir) * ldc + jc + jr, ldc, rows, cols);
          }
        }
      }
    }
  }
}

}  // namespace gazekit::nn

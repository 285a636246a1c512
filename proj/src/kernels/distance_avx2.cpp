// AVX2/FMA kernels. This translation unit is the only one compiled with
// -mavx2 -mfma; it is reached only after a runtime CPU check.

#include <immintrin.h>

#include "backends.hpp"

namespace hireg::kernels::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double squared_l2_avx2(const double* a, const double* b, std::size_t dim) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= dim; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= dim; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < dim; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void squared_l2_rows_avx2(const double* query, const double* rows,
                          std::size_t n_rows, std::size_t dim, double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    out[r] = squared_l2_avx2(query, rows + r * dim, dim);
  }
}

NearestRow nearest_row_avx2(const double* query, const double* rows,
                            std::size_t n_rows, std::size_t dim) {
  NearestRow best{0, squared_l2_avx2(query, rows, dim)};
  for (std::size_t r = 1; r < n_rows; ++r) {
    const double d = squared_l2_avx2(query, rows + r * dim, dim);
    if (d < best.dist2) best = {r, d};
  }
  return best;
}

}  // namespace

const KernelTable kAvx2Table{Backend::kAvx2, &squared_l2_avx2,
                             &squared_l2_rows_avx2, &nearest_row_avx2};

}  // namespace hireg::kernels::detail

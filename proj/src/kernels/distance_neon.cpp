// NEON kernels for aarch64.

#include <arm_neon.h>

#include "backends.hpp"

namespace hireg::kernels::detail {
namespace {

double squared_l2_neon(const double* a, const double* b, std::size_t dim) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    acc0 = vfmaq_f64(acc0, d0, d0);
    acc1 = vfmaq_f64(acc1, d1, d1);
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < dim; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void squared_l2_rows_neon(const double* query, const double* rows,
                          std::size_t n_rows, std::size_t dim, double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    out[r] = squared_l2_neon(query, rows + r * dim, dim);
  }
}

NearestRow nearest_row_neon(const double* query, const double* rows,
                            std::size_t n_rows, std::size_t dim) {
  NearestRow best{0, squared_l2_neon(query, rows, dim)};
  for (std::size_t r = 1; r < n_rows; ++r) {
    const double d = squared_l2_neon(query, rows + r * dim, dim);
    if (d < best.dist2) best = {r, d};
  }
  return best;
}

}  // namespace

const KernelTable kNeonTable{Backend::kNeon, &squared_l2_neon,
                             &squared_l2_rows_neon, &nearest_row_neon};

}  // namespace hireg::kernels::detail

// Reference kernels. Plain sequential accumulation; the vector backends are
// validated against these.

#include "backends.hpp"

namespace hireg::kernels::detail {
namespace {

double squared_l2_scalar(const double* a, const double* b, std::size_t dim) {
  double sum = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void squared_l2_rows_scalar(const double* query, const double* rows,
                            std::size_t n_rows, std::size_t dim, double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    out[r] = squared_l2_scalar(query, rows + r * dim, dim);
  }
}

NearestRow nearest_row_scalar(const double* query, const double* rows,
                              std::size_t n_rows, std::size_t dim) {
  NearestRow best{0, squared_l2_scalar(query, rows, dim)};
  for (std::size_t r = 1; r < n_rows; ++r) {
    const double d = squared_l2_scalar(query, rows + r * dim, dim);
    if (d < best.dist2) best = {r, d};
  }
  return best;
}

}  // namespace

const KernelTable kScalarTable{Backend::kScalar, &squared_l2_scalar,
                               &squared_l2_rows_scalar, &nearest_row_scalar};

}  // namespace hireg::kernels::detail

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace hireg::kernels {

// Data-parallel distance kernels over row-major double matrices. Every
// backend implements the same contract; the scalar one is the reference and
// the vector ones are tested against it.

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view to_string(Backend b);

struct NearestRow {
  std::size_t index;
  double dist2;
};

struct KernelTable {
  Backend backend;
  double (*squared_l2)(const double* a, const double* b, std::size_t dim);
  /// out[r] = |query - rows[r]|^2 for r in [0, n_rows).
  void (*squared_l2_rows)(const double* query, const double* rows,
                          std::size_t n_rows, std::size_t dim, double* out);
  /// argmin_r |query - rows[r]|^2, lowest r among ties. n_rows must be > 0.
  NearestRow (*nearest_row)(const double* query, const double* rows,
                            std::size_t n_rows, std::size_t dim);
};

/// Backends compiled into this binary and supported by the running CPU.
bool is_available(Backend b);

/// Table for a specific backend; throws ValidationError if unavailable.
const KernelTable& table(Backend b);

/// The table used by the library. Chosen on first use: the HIREG_SIMD
/// environment variable ("scalar", "avx2", "neon") wins, otherwise the
/// widest available backend.
const KernelTable& active();

/// Overrides the active backend (tests and benchmarking).
void set_active(Backend b);

inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  return active().squared_l2(a.data(), b.data(), a.size());
}

}  // namespace hireg::kernels

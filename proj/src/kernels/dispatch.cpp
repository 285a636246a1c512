#include <atomic>
#include <cstdlib>
#include <string>

#include "backends.hpp"
#include "hireg/errors.hpp"

namespace hireg::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(HIREG_HAS_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend widest_available() {
  if (is_available(Backend::kAvx2)) return Backend::kAvx2;
  if (is_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend initial_backend() {
  if (const char* env = std::getenv("HIREG_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::kScalar;
    if (v == "avx2" && is_available(Backend::kAvx2)) return Backend::kAvx2;
    if (v == "neon" && is_available(Backend::kNeon)) return Backend::kNeon;
  }
  return widest_available();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(initial_backend())};
  return slot;
}

}  // namespace

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

bool is_available(Backend b) {
  switch (b) {
    case Backend::kScalar: return true;
    case Backend::kAvx2: {
      static const bool ok = cpu_has_avx2();
      return ok;
    }
    case Backend::kNeon:
#if defined(HIREG_HAS_NEON_KERNELS)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend b) {
  if (!is_available(b)) {
    throw ValidationError("kernel backend '" + std::string(to_string(b)) +
                          "' is not available on this machine");
  }
  switch (b) {
#if defined(HIREG_HAS_AVX2_KERNELS)
    case Backend::kAvx2: return detail::kAvx2Table;
#endif
#if defined(HIREG_HAS_NEON_KERNELS)
    case Backend::kNeon: return detail::kNeonTable;
#endif
    default: return detail::kScalarTable;
  }
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Backend b) { active_slot().store(&table(b), std::memory_order_release); }

}  // namespace hireg::kernels

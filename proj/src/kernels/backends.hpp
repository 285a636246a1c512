#pragma once

#include "hireg/kernels.hpp"

namespace hireg::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(HIREG_HAS_AVX2_KERNELS)
extern const KernelTable kAvx2Table;
#endif
#if defined(HIREG_HAS_NEON_KERNELS)
extern const KernelTable kNeonTable;
#endif

}  // namespace hireg::kernels::detail

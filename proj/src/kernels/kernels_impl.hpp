#pragma once

#include "natgrad/kernels.hpp"

namespace natgrad::kernels {

#if defined(NATGRAD_BUILD_AVX2)
// Defined in kernels_avx2.cpp, which is the only TU compiled with -mavx2.
const KernelTable& avx2_table_unchecked();
#endif

}  // namespace natgrad::kernels

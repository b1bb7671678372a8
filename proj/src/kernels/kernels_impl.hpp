#pragma once

#include "shir/kernels.hpp"

namespace shir::kernels::detail {

const KernelTable& scalar_impl() noexcept;
// nullptr when the translation unit was built without AVX2 support.
const KernelTable* avx2_impl() noexcept;

}  // namespace shir::kernels::detail

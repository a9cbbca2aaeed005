#include "kamg/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace kamg {

void tune_allocator_for_tensor_churn() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
}

}  // namespace kamg

#pragma once

namespace kamg {

// Training steps allocate and free many short-lived tensors in the 64KB-1MB
// range; glibc serves those from fresh mmaps by default, which costs a page
// fault per touched page every step. Raising the mmap/trim thresholds keeps
// the blocks on the reusable heap (observed ~2x on forward passes). Call once
// at program start; harmless on non-glibc allocators.
void tune_allocator_for_tensor_churn();

}  // namespace kamg

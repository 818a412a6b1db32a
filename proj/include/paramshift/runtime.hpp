#pragma once

namespace paramshift {

/// Keeps large tensor buffers on the heap instead of fresh mmaps; autodiff
/// allocates and frees the same sizes every step. Call once at startup.
void configure_allocator();

}  // namespace paramshift

#pragma once

namespace mcm {

// Keeps freed tensor buffers in the process heap instead of returning them
// to the OS. Training allocates and frees multi-megabyte im2col buffers
// every step; without this each one costs fresh page faults. No-op outside
// glibc. Call once at program start.
void configure_allocator();

}  // namespace mcm

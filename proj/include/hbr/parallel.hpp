#pragma once

#include <cstddef>
#include <functional>

namespace hbr {

/// Worker count taken from HBR_THREADS, falling back to the hardware
/// concurrency. Always at least 1.
unsigned thread_count();

/// Calls body(i) for every i in [0, n), spread over thread_count()
/// threads in contiguous chunks. Each index is visited exactly once, so
/// bodies that write only to slot i give results independent of the
/// schedule. The first exception thrown by a body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace hbr

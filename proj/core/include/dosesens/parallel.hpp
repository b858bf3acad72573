#pragma once

#include <cstddef>
#include <functional>

namespace dosesens {

// Worker count used by parallel_for. Zero means "not set": the value of
// DOSESENS_THREADS is used when present, otherwise the hardware concurrency.
void set_thread_count(unsigned threads);
unsigned thread_count();

// Calls body(i) for every i in [0, n). Work is split into contiguous blocks;
// body must only write to per-index storage. Exceptions thrown by body are
// rethrown on the calling thread (the first one by index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dosesens

#pragma once

#include <cstddef>
#include <functional>

namespace multiscreen {

/// Worker count used by parallel_for. Defaults to MULTISCREEN_THREADS when
/// set, else the hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Iterations must write to disjoint outputs;
/// results then match the sequential loop exactly. Nested calls run inline.
/// The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace multiscreen

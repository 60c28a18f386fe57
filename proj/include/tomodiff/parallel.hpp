#pragma once

#include <cstddef>
#include <functional>

namespace tomodiff {

/// Worker count used by slice-parallel loops. Reads TDM_THREADS once; falls
/// back to the hardware concurrency. Always >= 1.
std::size_t worker_count();

/// Overrides the worker count for the current process (tests use this to check
/// worker-count invariance). Passing 0 restores the environment default.
void set_worker_count(std::size_t n);

/// Runs body(begin, end) over contiguous, disjoint sub-ranges of [0, n).
/// The partition depends on the worker count, so bodies must only write to
/// locations owned by their range.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace tomodiff

#pragma once

#include <cstddef>
#include <functional>

namespace nsfc {

struct Execution
{
    int threads = 1;
    // Fixed-size accumulation chunks reduced in index order, so sums do not
    // depend on the worker count.
    bool deterministic = true;
};

void set_execution(const Execution& exec);
[[nodiscard]] Execution execution();

// Number of accumulation chunks used by reductions. Fixed in deterministic
// mode, equal to the worker count otherwise.
[[nodiscard]] int reduction_chunks();

// Runs fn(task) for task in [0, n_tasks) on up to execution().threads
// workers. Rethrows the first exception after all workers stop.
void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn);

// Keeps large tensor buffers on the heap instead of mmap/munmap per
// allocation; training spends most of its time in the kernel otherwise.
// No-op outside glibc.
void configure_allocator();

} // namespace nsfc

#include "nsfc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nsfc {

namespace {

constexpr int kDeterministicChunks = 16;

// Nested regions run serially on the calling worker.
thread_local bool in_parallel_region = false;

Execution& global_execution()
{
    static Execution exec{std::max(1, static_cast<int>(std::thread::hardware_concurrency())), true};
    return exec;
}

} // namespace

void set_execution(const Execution& exec)
{
    Execution e = exec;
    e.threads = std::max(1, e.threads);
    global_execution() = e;
}

Execution execution() { return global_execution(); }

int reduction_chunks()
{
    const Execution& e = global_execution();
    return e.deterministic ? kDeterministicChunks : e.threads;
}

void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn)
{
    if (n_tasks == 0) return;
    const auto workers =
        std::min<std::size_t>(n_tasks, static_cast<std::size_t>(global_execution().threads));
    if (workers <= 1 || in_parallel_region) {
        for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        in_parallel_region = true;
        struct Reset
        {
            ~Reset() { in_parallel_region = false; }
        } reset;
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= n_tasks) return;
            try {
                fn(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_tasks);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

void configure_allocator()
{
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

} // namespace nsfc

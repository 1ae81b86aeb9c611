#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qcoh {

namespace detail {

inline std::atomic<unsigned>& thread_budget_ref() {
    static std::atomic<unsigned> budget{std::max(1u, std::thread::hardware_concurrency())};
    return budget;
}

inline bool& inside_parallel_region() {
    thread_local bool inside = false;
    return inside;
}

} // namespace detail

/// Global worker budget shared by every parallel kernel in the library.
inline void set_thread_budget(unsigned threads) { detail::thread_budget_ref() = std::max(1u, threads); }
inline unsigned thread_budget() { return detail::thread_budget_ref(); }

/// Runs fn(i) for i in [0, count). Work is claimed dynamically, so callers must
/// write results into per-index slots; that keeps results independent of the
/// schedule. Nested calls run serially on the calling worker. The first
/// exception thrown by any task is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const unsigned workers =
        detail::inside_parallel_region() ? 1u : static_cast<unsigned>(std::min<std::size_t>(thread_budget(), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        detail::inside_parallel_region() = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
        detail::inside_parallel_region() = false;
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace qcoh

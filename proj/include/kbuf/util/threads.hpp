#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace kbuf {

/// Worker count honoring the KBUF_THREADS cap; defaults to hardware parallelism.
inline std::size_t worker_count() {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("KBUF_THREADS")) {
        try {
            long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    return hw;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled by exactly one worker; work is split into contiguous chunks.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace kbuf

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kbc {

inline constexpr const char* workers_env = "KBC_WORKERS";

// KBC_WORKERS overrides the requested count; 0 selects the hardware concurrency.
inline int resolve_workers(int requested)
{
    if (const char* e = std::getenv(workers_env); e && *e) {
        char* end = nullptr;
        long v = std::strtol(e, &end, 10);
        if (*end != '\0' || v < 0 || v > 4096)
            throw std::invalid_argument(std::string(workers_env) + ": expected a non-negative integer, got '" + e + "'");
        requested = static_cast<int>(v);
    }
    if (requested > 0) return requested;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks must write only
// to their own slots; the first exception is rethrown after all threads join.
template <class F>
void parallel_for(std::size_t n, int workers, F&& fn)
{
    const std::size_t w = std::min<std::size_t>(std::max(workers, 1), n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex mu;
    auto body = [&] {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first) first = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

} // namespace kbc

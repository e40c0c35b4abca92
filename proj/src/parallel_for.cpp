#include "hflow/parallel_for.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hflow {

namespace {

std::atomic<int> g_max_threads{0}; // 0 = not configured yet

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

} // namespace

void set_max_threads(int count) {
    g_max_threads.store(count < 1 ? 1 : count);
}

int max_threads() {
    const int configured = g_max_threads.load();
    return configured > 0 ? configured : default_threads();
}

void parallel_for_ranges(std::size_t count,
                         const std::function<void(std::size_t, std::size_t)>& body) {
    const int workers = max_threads();
    if (workers <= 1 || count < 256) {
        body(0, count);
        return;
    }
    const auto nchunk = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    std::vector<std::thread> pool;
    pool.reserve(nchunk);
    const std::size_t base = count / nchunk;
    const std::size_t extra = count % nchunk;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < nchunk; ++c) {
        const std::size_t end = begin + base + (c < extra ? 1 : 0);
        pool.emplace_back([&body, &failure, &failure_mutex, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    parallel_for_ranges(count, [&body](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) body(i);
    });
}

} // namespace hflow

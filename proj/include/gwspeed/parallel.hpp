#ifndef GWSPEED_PARALLEL_HPP
#define GWSPEED_PARALLEL_HPP

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gwspeed {

// Runs f(replica_index) for indices [0, n) on a fixed-size worker pool and
// returns the results ordered by index. Replica seeds derive from the index,
// and the caller reduces the returned vector sequentially, so estimates are
// bit-identical for any worker count.
template <typename T, typename F>
std::vector<T> parallel_map(std::int64_t n, int workers, F&& f) {
    std::vector<T> results(static_cast<std::size_t>(n));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i)
            results[static_cast<std::size_t>(i)] = f(i);
        return results;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[static_cast<std::size_t>(i)] = f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return results;
}

} // namespace gwspeed

#endif

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bsdelab {

/// Fixed block size for path-parallel work. Reductions combine per-block
/// partials in block order, so results do not depend on the thread count.
inline constexpr std::size_t kPathBlock = 4096;

inline std::size_t block_count(std::size_t n) { return (n + kPathBlock - 1) / kPathBlock; }

/// Calls fn(block_index, begin, end) for every block of [0, n).
template <class Fn>
void for_each_block(std::size_t n, int threads, Fn&& fn) {
    const std::size_t blocks = block_count(n);
    const auto run = [&](std::size_t b) {
        const std::size_t begin = b * kPathBlock;
        fn(b, begin, std::min(n, begin + kPathBlock));
    };
    const std::size_t workers =
        std::min<std::size_t>(blocks, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) run(b);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t b = w; b < blocks; b += workers) {
                try {
                    run(b);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bsdelab

#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace seqvimp::detail {

inline int env_workers() {
    const char* raw = std::getenv("SEQVIMP_WORKERS");
    if (!raw) return 1;
    const int value = std::atoi(raw);
    return value >= 1 ? value : 1;
}

inline bool& inside_parallel_flag() {
    thread_local bool flag = false;
    return flag;
}

// Runs fn(i) for i in [0, count) across the configured worker threads in
// fixed round-robin chunks.  Safe only for independent iterations, and fn
// must not throw — a throw on a worker thread is fatal.  Nested calls run
// serially so one level of parallelism never multiplies into another.
template <class Fn>
void parallel_for(int count, Fn fn) {
    const int workers =
        inside_parallel_flag() ? 1 : std::min(env_workers(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([=] {
            inside_parallel_flag() = true;
            for (int i = w; i < count; i += workers) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace seqvimp::detail

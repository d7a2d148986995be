#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dialsynth {

// Kernels take an ExecPolicy; the serial path is the reference the parallel
// path is tested against.
enum class ExecPolicy { serial, parallel };

void set_thread_count(int n);
int thread_count();

// Calls f(i) for i in [0, n). The first exception thrown by any iteration is
// rethrown after the loop.
template <typename F>
void for_each_index(std::size_t n, ExecPolicy policy, F&& f)
{
    if (policy == ExecPolicy::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr err;
    std::mutex mu;
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace dialsynth

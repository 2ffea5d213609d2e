#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace tforest::detail {

/// OpenMP loop over [0, n) that carries the first exception out of the
/// parallel region instead of terminating. Iterations are independent.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, bool dynamic = false)
{
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<long long>(n);
    const auto body = [&](long long i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error)
                error = std::current_exception();
        }
    };
    if (dynamic) {
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < count; ++i)
            body(i);
    } else {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < count; ++i)
            body(i);
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace tforest::detail

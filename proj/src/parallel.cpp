#include "gsde/parallel.hpp"

#include <exception>
#include <mutex>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/parallel_reduce.h>
#include <tbb/task_arena.h>

namespace gsde {

namespace {

int arena_size(const ExecutionPolicy& policy)
{
    return policy.threads == 0 ? tbb::task_arena::automatic : static_cast<int>(policy.threads);
}

} // namespace

void parallel_for(std::size_t n, const ExecutionPolicy& policy, const std::function<void(std::size_t)>& body)
{
    if (n == 0) return;
    if (policy.threads == 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    // The first exception to arrive is rethrown once the loop drains.
    std::exception_ptr failure;
    std::mutex guard;
    tbb::task_arena arena(arena_size(policy));
    arena.execute([&] {
        tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const tbb::blocked_range<std::size_t>& r) {
            for (std::size_t i = r.begin(); i != r.end(); ++i) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(guard);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    });
    if (failure) std::rethrow_exception(failure);
}

double parallel_sum(std::size_t n, const ExecutionPolicy& policy, const std::function<double(std::size_t)>& term)
{
    if (policy.deterministic || policy.threads == 1) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += term(i);
        return acc;
    }
    tbb::task_arena arena(arena_size(policy));
    return arena.execute([&] {
        return tbb::parallel_reduce(
            tbb::blocked_range<std::size_t>(0, n), 0.0,
            [&](const tbb::blocked_range<std::size_t>& r, double acc) {
                for (std::size_t i = r.begin(); i != r.end(); ++i) acc += term(i);
                return acc;
            },
            [](double a, double b) { return a + b; });
    });
}

} // namespace gsde

#pragma once

#include <cstddef>
#include <functional>

namespace gsde {

/// How work is spread across workers.
///
/// `threads == 0` lets the scheduler pick. With `deterministic` set, every
/// floating-point reduction runs in a fixed order so results are bitwise
/// reproducible regardless of thread count.
struct ExecutionPolicy {
    std::size_t threads = 0;
    bool deterministic = true;
};

/// Calls `body(i)` for i in [0, n) using at most `policy.threads` workers.
/// Iterations must be independent.
void parallel_for(std::size_t n, const ExecutionPolicy& policy, const std::function<void(std::size_t)>& body);

/// Sum of `term(i)` over [0, n). Fixed left-to-right order in deterministic
/// mode; a parallel tree reduction otherwise (may differ in the last ulp).
double parallel_sum(std::size_t n, const ExecutionPolicy& policy, const std::function<double(std::size_t)>& term);

} // namespace gsde

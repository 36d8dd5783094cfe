#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sympdyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Input violated a documented precondition (bad dimensions, bad config, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to converge; the message carries diagnostics.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void check_even_dim(int dim, const char* where) {
    if (dim < 4 || dim % 2 != 0)
        throw ValidationError(std::string(where) + ": dimension must be even and >= 4, got " +
                              std::to_string(dim));
}

/// x^k for small non-negative integer k, by repeated squaring.
inline double ipow(double x, int k) {
    double r = 1.0;
    while (k > 0) {
        if (k & 1) r *= x;
        x *= x;
        k >>= 1;
    }
    return r;
}

// --- deterministic seed derivation -----------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` of consumer `tag`. Stable across runs and
/// independent of how work is distributed over threads.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ (0xa076'1d64'78bd'642fULL * tag)) ^ index);
}

// --- deterministic parallel execution ---------------------------------------

namespace detail {
inline std::atomic<int>& thread_budget_ref() {
    static std::atomic<int> budget{0};  // 0 = use hardware_concurrency
    return budget;
}
}  // namespace detail

inline void set_thread_budget(int n) { detail::thread_budget_ref().store(n); }

inline int thread_budget() {
    int b = detail::thread_budget_ref().load();
    if (b > 0) return b;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Work items must be independent; any exception
/// is rethrown on the caller thread. Results must be written to per-index
/// slots so the outcome does not depend on the worker count.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    if (n <= 0) return;
    int workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace sympdyn

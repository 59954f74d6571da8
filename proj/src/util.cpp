#include "conedef/util.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace conedef {

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t nthreads = std::max(1u, hw);
    // Small loops are not worth the thread launch overhead.
    if (n < 4096 || nthreads == 1) {
        fn(0, n);
        return;
    }
    nthreads = std::min<std::size_t>(nthreads, 16);
    std::size_t block = (n + nthreads - 1) / nthreads;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        std::size_t b = t * block;
        std::size_t e = std::min(n, b + block);
        if (b >= e) break;
        pool.emplace_back(fn, b, e);
    }
    for (auto& th : pool) th.join();
}

void MaxAbs::feed(double v, std::size_t at) {
    double a = std::abs(v);
    if (a > value || (a == value && at < where)) {
        value = a;
        where = at;
    }
}

void MaxAbs::merge(const MaxAbs& other) {
    if (other.where == static_cast<std::size_t>(-1)) return;
    if (other.value > value || (other.value == value && other.where < where)) {
        value = other.value;
        where = other.where;
    }
}

void MinVal::feed(double v, std::size_t at) {
    if (!seen || v < value || (v == value && at < where)) {
        value = v;
        where = at;
        seen = true;
    }
}

void MinVal::merge(const MinVal& other) {
    if (!other.seen) return;
    if (!seen || other.value < value || (other.value == value && other.where < where)) {
        value = other.value;
        where = other.where;
        seen = true;
    }
}

} // namespace conedef

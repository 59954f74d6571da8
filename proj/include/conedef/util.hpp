#pragma once
// Shared small utilities: error reporting and a block-wise parallel loop.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace conedef {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(what);
}

// Runs fn(begin, end) over a partition of [0, n). Blocks are assigned statically,
// so any per-block artifacts the caller collects are reproducible. fn must not
// touch state owned by another block.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Order-independent max reducer used by the verification sweeps: tracks the
// maximum of |value| together with the flat sample index where it occurred
// (ties resolved toward the smaller index so reports are deterministic).
struct MaxAbs {
    double value = 0.0;
    std::size_t where = static_cast<std::size_t>(-1);
    void feed(double v, std::size_t at);
    void merge(const MaxAbs& other);
};

// Minimum tracker with the same determinism contract as MaxAbs.
struct MinVal {
    double value = 0.0;
    std::size_t where = static_cast<std::size_t>(-1);
    bool seen = false;
    void feed(double v, std::size_t at);
    void merge(const MinVal& other);
};

} // namespace conedef

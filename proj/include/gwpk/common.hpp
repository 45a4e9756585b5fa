#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <exception>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gwpk {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using RVec = std::vector<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

enum class ErrorCode {
  invalid_argument,
  domain_mismatch,
  grid_mismatch,
  precondition,
  config,
  numerical,
  not_converged,
  blow_up,
  boundary_mass,
  caustic,
  io,
};

const char* to_string(ErrorCode c);

// Numerical failures map to CLI exit code 3, everything else to 2.
bool is_numerical(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

// Worker count: GWPK_THREADS if set and positive, otherwise hardware concurrency.
int thread_count();

// Static contiguous partition of [0, n); each index is processed by exactly one
// worker, so results written per index are independent of the thread count.
// The exception thrown at the lowest index is rethrown after all workers join.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errs(nt);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / nt, hi = n * (w + 1) / nt;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Sums per-item vector contributions: items are split into a fixed number of
// contiguous chunks (independent of the thread count), each chunk accumulates
// in item order, and chunk totals are added in chunk order.
template <class F>
CVec ordered_accumulate(std::size_t count, std::size_t len, F&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(64, count));
  std::vector<CVec> acc(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    acc[c].assign(len, cplx(0.0));
    for (std::size_t i = count * c / chunks; i < count * (c + 1) / chunks; ++i) fn(i, acc[c]);
  });
  CVec out(len, cplx(0.0));
  for (const auto& a : acc)
    for (std::size_t i = 0; i < len; ++i) out[i] += a[i];
  return out;
}

}  // namespace gwpk

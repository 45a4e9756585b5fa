#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace gwpk::detail {

namespace {

// FFTW planning is not thread safe; execution of an existing plan on
// different arrays is, so plans are cached and shared.
std::mutex plan_mutex;
std::map<std::tuple<int, int, int>, fftw_plan> plans;

fftw_plan get_plan(int n, int d, int sign) {
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto key = std::make_tuple(n, d, sign);
  auto it = plans.find(key);
  if (it != plans.end()) return it->second;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
  fftw_complex* buf = fftw_alloc_complex(total);
  int dims[3] = {n, n, n};
  fftw_plan p = fftw_plan_dft(d, dims, buf, buf, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  if (!p) fail(ErrorCode::numerical, "fftw plan creation failed");
  plans.emplace(key, p);
  return p;
}

}  // namespace

void fft_inplace(cplx* data, int n, int d, int sign) {
  fftw_plan p = get_plan(n, d, sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p, ptr, ptr);
}

}  // namespace gwpk::detail

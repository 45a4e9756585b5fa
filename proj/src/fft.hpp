#pragma once

#include "gwpk/common.hpp"

namespace gwpk::detail {

// Unnormalized in-place DFT of size n^d; sign = -1 forward, +1 backward.
void fft_inplace(cplx* data, int n, int d, int sign);

}  // namespace gwpk::detail

#include "gwpk/common.hpp"

#include <cstdlib>

namespace gwpk {

const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::domain_mismatch: return "domain_mismatch";
    case ErrorCode::grid_mismatch: return "grid_mismatch";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::config: return "config";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::blow_up: return "blow_up";
    case ErrorCode::boundary_mass: return "boundary_mass";
    case ErrorCode::caustic: return "caustic";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

bool is_numerical(ErrorCode c) {
  switch (c) {
    case ErrorCode::numerical:
    case ErrorCode::not_converged:
    case ErrorCode::blow_up:
    case ErrorCode::boundary_mass:
    case ErrorCode::caustic:
      return true;
    default:
      return false;
  }
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

int thread_count() {
  if (const char* env = std::getenv("GWPK_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace gwpk

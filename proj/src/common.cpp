// SPDX-License-Identifier: Apache-2.0

#include "ggrow/common.hpp"

#include <omp.h>

namespace ggrow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TooFewPoints: return "too few points";
    case ErrorCode::MalformedHeader: return "malformed header";
    case ErrorCode::BadPropertyType: return "bad property type";
    case ErrorCode::TruncatedData: return "truncated data";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Degenerate: return "degenerate input";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Precondition: return "precondition violated";
    case ErrorCode::StaleCache: return "stale fragment cache";
    case ErrorCode::EmptyMask: return "empty mask";
    case ErrorCode::NothingToPropagate: return "nothing to propagate";
    case ErrorCode::Backend: return "backend error";
    case ErrorCode::Protocol: return "protocol error";
    case ErrorCode::Config: return "config error";
  }
  return "unknown";
}

int hardware_threads() { return omp_get_num_procs(); }

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return omp_get_max_threads();
}

}  // namespace ggrow

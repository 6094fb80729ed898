#include "gridcast/error.hpp"

namespace gridcast {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::shape: return "shape error";
    case ErrorCode::format: return "format error";
    case ErrorCode::version: return "version mismatch";
    case ErrorCode::truncated: return "truncated file";
    case ErrorCode::divergence: return "training diverged";
    case ErrorCode::out_of_range: return "out of range";
    case ErrorCode::missing_cache: return "missing forward cache";
  }
  return "unknown error";
}

}  // namespace gridcast

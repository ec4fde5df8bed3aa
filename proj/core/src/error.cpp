#include "heightnet/error.hpp"

namespace heightnet {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::tolerance: return "tolerance";
  }
  return "unknown";
}

}  // namespace heightnet

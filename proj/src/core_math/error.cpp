#include "core_math/error.hpp"

namespace mergelab {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Structural: return "structural";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace mergelab

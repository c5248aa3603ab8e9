#include "recat/error.hpp"

namespace recat {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ShapeMismatch: return "shape";
        case ErrorKind::InvalidConfig: return "config";
        case ErrorKind::IndexOutOfRange: return "index";
        case ErrorKind::StaleTape: return "tape";
        case ErrorKind::NonBinaryMask: return "mask";
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::CrcMismatch: return "crc";
        case ErrorKind::Validation: return "config";
        case ErrorKind::InsufficientSamples: return "samples";
        case ErrorKind::TooSmall: return "shape";
    }
    return "unknown";
}

}  // namespace recat

#include "gramsec/error.hpp"

namespace gramsec {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::Version: return "version";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::NonFinite: return "non-finite";
        case ErrorKind::Invariant: return "invariant";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Shape: return "shape";
    }
    return "unknown";
}

void rethrow_with_context(const Error& e, const std::string& prefix) {
    const std::string m = prefix + e.what();
    switch (e.kind()) {
        case ErrorKind::Io: throw IoError(m);
        case ErrorKind::Format: throw FormatError(m);
        case ErrorKind::Version: throw VersionError(m);
        case ErrorKind::Truncated: {
            const auto* t = dynamic_cast<const TruncationError*>(&e);
            throw TruncationError(m, t ? t->expected_bytes() : 0, t ? t->available_bytes() : 0);
        }
        case ErrorKind::NonFinite: throw NonFiniteError(m);
        case ErrorKind::Invariant: throw InvariantError(m);
        case ErrorKind::Contract: throw ContractError(m);
        case ErrorKind::Shape: throw ShapeError(m);
    }
    throw Error(e.kind(), m);
}

}  // namespace gramsec

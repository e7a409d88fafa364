#include "hcil/error.hpp"

namespace hcil {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::format: return "E_FORMAT";
        case ErrorCode::corruption: return "E_CORRUPT";
        case ErrorCode::taxonomy: return "E_TAXONOMY";
        case ErrorCode::parse: return "E_PARSE";
        case ErrorCode::validation: return "E_VALIDATION";
        case ErrorCode::degenerate: return "E_DEGENERATE";
        case ErrorCode::duplicate_class: return "E_DUPLICATE";
        case ErrorCode::generation: return "E_GENERATION";
        case ErrorCode::usage: return "E_USAGE";
        case ErrorCode::io: return "E_IO";
    }
    return "E_UNKNOWN";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

void rethrow_with_context(const Error& e, const std::string& prefix) {
    const std::string message = prefix + e.what();
    switch (e.code()) {
        case ErrorCode::format: throw FormatError(message);
        case ErrorCode::corruption: throw CorruptionError(message);
        case ErrorCode::taxonomy: throw TaxonomyError(message);
        case ErrorCode::parse: throw ParseError(message);
        case ErrorCode::validation: throw ValidationError(message);
        case ErrorCode::degenerate: throw DegenerateError(message);
        case ErrorCode::duplicate_class: throw DuplicateClassError(message);
        case ErrorCode::generation: throw GenerationError(message);
        case ErrorCode::usage: throw UsageError(message);
        case ErrorCode::io: throw IoError(message);
    }
    throw Error(e.code(), message);
}

}  // namespace hcil

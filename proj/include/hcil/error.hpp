#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hcil {

// Stable error codes; the CLI prints them as the first token of its one-line
// error message.
enum class ErrorCode {
    format,
    corruption,
    taxonomy,
    parse,
    validation,
    degenerate,
    duplicate_class,
    generation,
    usage,
    io,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define HCIL_DEFINE_ERROR(Name, Code)                                          \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(Code, message) {}    \
    }

HCIL_DEFINE_ERROR(FormatError, ErrorCode::format);
HCIL_DEFINE_ERROR(CorruptionError, ErrorCode::corruption);
HCIL_DEFINE_ERROR(TaxonomyError, ErrorCode::taxonomy);
HCIL_DEFINE_ERROR(ParseError, ErrorCode::parse);
HCIL_DEFINE_ERROR(ValidationError, ErrorCode::validation);
HCIL_DEFINE_ERROR(DegenerateError, ErrorCode::degenerate);
HCIL_DEFINE_ERROR(DuplicateClassError, ErrorCode::duplicate_class);
HCIL_DEFINE_ERROR(GenerationError, ErrorCode::generation);
HCIL_DEFINE_ERROR(UsageError, ErrorCode::usage);
HCIL_DEFINE_ERROR(IoError, ErrorCode::io);

#undef HCIL_DEFINE_ERROR

// Rethrows `e` as the same concrete error type with `prefix` prepended.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& prefix);

}  // namespace hcil

#pragma once

#include <stdexcept>
#include <string>

namespace lvggm {

/// Base of every error raised by the library. `kind()` is the stable,
/// machine-readable tag the CLI reports in its stderr JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error("argument_error", what) {}
};

/// A matrix that had to be positive definite was not (Cholesky or inertia test failed).
struct NotPositiveDefinite : Error {
    explicit NotPositiveDefinite(const std::string& what) : Error("not_positive_definite", what) {}
};

/// The r x r capacitance system of a Woodbury update is numerically singular.
struct SingularityError : Error {
    explicit SingularityError(const std::string& what) : Error("singularity_error", what) {}
};

struct InsufficientData : Error {
    explicit InsufficientData(const std::string& what) : Error("insufficient_data", what) {}
};

struct GenerationError : Error {
    explicit GenerationError(const std::string& what) : Error("generation_error", what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error("parse_error", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io_error", what) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error("validation_error", what) {}
};

} // namespace lvggm

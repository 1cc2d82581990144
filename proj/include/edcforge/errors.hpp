#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace edcforge {

// Error kinds map 1:1 onto CLI exit codes.
enum class ErrorKind {
    generic = 1,
    usage = 2,
    missing_file = 3,
    validation = 4,
    format = 5,
    numeric = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> issues)
        : Error(ErrorKind::validation, join(issues)), issues_(std::move(issues)) {}

    const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& issues) {
        std::string out = "invalid room config:";
        for (const auto& s : issues) {
            out += " [";
            out += s;
            out += "]";
        }
        return out;
    }

    std::vector<std::string> issues_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorKind::missing_file, message) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& message) : Error(ErrorKind::format, message) {}
};

// Raised when a decay curve lacks the dynamic range a fit requires.
class InsufficientRangeError : public Error {
public:
    explicit InsufficientRangeError(const std::string& message)
        : Error(ErrorKind::numeric, message) {}
};

} // namespace edcforge

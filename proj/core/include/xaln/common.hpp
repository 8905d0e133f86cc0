#pragma once

#include <stdexcept>
#include <string>

namespace xaln {

// Base error. what() is a single line of the form "category: detail" so the
// CLI can forward it verbatim.
class Error : public std::runtime_error {
public:
    Error(const std::string& category, const std::string& detail)
        : std::runtime_error(category + ": " + detail), category_(category) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& d) : Error("invalid-shape", d) {}
};
struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& d) : Error("invalid-input", d) {}
};
struct ContractViolation : Error {
    explicit ContractViolation(const std::string& d) : Error("contract-violation", d) {}
};
struct NonFiniteError : Error {
    explicit NonFiniteError(const std::string& d) : Error("non-finite", d) {}
};
struct IoError : Error {
    explicit IoError(const std::string& d) : Error("io", d) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& d) : Error("config", d) {}
};

enum class Mode { train, eval };

}  // namespace xaln

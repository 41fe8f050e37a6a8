#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stdtrack {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Shapes of operands are incompatible.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;

    DimensionError(const std::string& op, const Shape& a, const Shape& b)
        : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
};

// Model or run configuration is not valid (indivisible resolution, odd width, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke an operation precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class UnsupportedKernelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace stdtrack

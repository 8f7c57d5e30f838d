#pragma once

#include <stdexcept>
#include <string>

namespace nsfc {

enum class ErrorKind { invalid_argument, io, numeric };

// Single exception type for the library. The kind drives the CLI exit code.
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what)
        , kind_(kind)
    {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw Error(ErrorKind::invalid_argument, message);
}

} // namespace nsfc

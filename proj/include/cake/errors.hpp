// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_ERRORS_HPP
#define CAKE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cake {

// Every library failure derives from Error; `kind()` is a stable tag used in
// machine-readable error records written by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t position, std::string expected)
        : Error("SyntaxError", "syntax error at position " + std::to_string(position) + ": expected " + expected),
          position_(position), expected_(std::move(expected)) {}

    [[nodiscard]] std::size_t position() const noexcept { return position_; }
    [[nodiscard]] const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

class UnknownKernel : public Error {
public:
    explicit UnknownKernel(std::string token)
        : Error("UnknownKernel", "unknown base kernel '" + token + "'"), token_(std::move(token)) {}

    [[nodiscard]] const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

#define CAKE_DEFINE_ERROR(Name)                                                     \
    class Name : public Error {                                                     \
    public:                                                                         \
        explicit Name(const std::string& what) : Error(#Name, what) {}              \
    };

CAKE_DEFINE_ERROR(DepthExceeded)
CAKE_DEFINE_ERROR(InvalidKernel)
CAKE_DEFINE_ERROR(DimensionMismatch)
CAKE_DEFINE_ERROR(NotPositiveDefinite)
CAKE_DEFINE_ERROR(FitFailed)
CAKE_DEFINE_ERROR(TemplateError)
CAKE_DEFINE_ERROR(TransportError)
CAKE_DEFINE_ERROR(EmptyPopulation)
CAKE_DEFINE_ERROR(OutOfDomain)
CAKE_DEFINE_ERROR(UnknownBenchmark)
CAKE_DEFINE_ERROR(ObjectiveError)
CAKE_DEFINE_ERROR(ConfigError)
CAKE_DEFINE_ERROR(MissingSnapshot)
CAKE_DEFINE_ERROR(FormatError)

#undef CAKE_DEFINE_ERROR

} // namespace cake

#endif

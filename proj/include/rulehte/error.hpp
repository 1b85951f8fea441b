#pragma once

#include <stdexcept>
#include <string>

namespace rulehte {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ColumnError : public Error {
public:
    explicit ColumnError(const std::string& column)
        : Error("column not found: '" + column + "'"), column_(column) {}

    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row, std::size_t col)
        : Error(row == 0 ? what
                         : what + " (line " + std::to_string(row) +
                               (col ? ", column " + std::to_string(col) : std::string()) + ")"),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class PropensityError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

class FormatVersionError : public Error {
public:
    FormatVersionError(int found, int expected)
        : Error("unsupported model format_version " + std::to_string(found) + " (expected " +
                std::to_string(expected) + ")"),
          found_(found), expected_(expected) {}

    int found() const noexcept { return found_; }
    int expected() const noexcept { return expected_; }

private:
    int found_;
    int expected_;
};

}  // namespace rulehte

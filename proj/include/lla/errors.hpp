#pragma once

#include <stdexcept>
#include <string>

namespace lla {

/// Invalid configuration value. `path()` is a JSON pointer into the run
/// config when the error comes from parsing, or a field name otherwise.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string path, const std::string& what)
        : std::invalid_argument(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Malformed input file (manifest, image, checkpoint). Line is 1-based, 0 if unknown.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace lla

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nseg {

// Base of every error the library raises. `kind()` is a stable short tag
// used by the CLI when it reports errors as JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& message) : Error("invalid-input", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class CheckError : public Error {
public:
    explicit CheckError(const std::string& message) : Error("check", message) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& message)
        : Error("parse", file + ":" + std::to_string(line) + ": " + message),
          file_(file), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

class TrainingError : public Error {
public:
    TrainingError(std::size_t epoch, std::size_t batch, const std::string& message)
        : Error("training", "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) +
                                ": " + message),
          epoch_(epoch), batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

}  // namespace nseg

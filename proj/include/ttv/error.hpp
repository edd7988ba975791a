#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttv {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied something outside an operation's domain (exit code 2 at the CLI).
class InvalidInput : public Error {
public:
    using Error::Error;
};

class ParseError : public InvalidInput {
public:
    ParseError(const std::string& what, std::size_t offset)
        : InvalidInput(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedFormat : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// A song that cannot yield a melody/bass pair.
class InvalidSong : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class NoKey : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class InvalidRoll : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class UnsupportedMode : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Non-finite activation; the message names the layer.
class NumericFailure : public Error {
public:
    using Error::Error;
};

/// Checkpoint or dataset file is truncated, corrupt or of the wrong version.
class IntegrityError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class ShapeMismatch : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class MissingId : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

}  // namespace ttv

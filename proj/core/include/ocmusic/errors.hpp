#pragma once

#include <stdexcept>
#include <string>

namespace ocmusic {

// Malformed container/stream (bad WAV header, truncated MIDI chunk, ...).
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Well-formed container but a codec/layout we deliberately do not handle.
class UnsupportedFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Manifest or config text that fails validation. Carries the 1-based line.
class ValidationError : public std::runtime_error {
public:
    ValidationError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// A feature whose preconditions are not met (too few notes, silence, ...).
class UndefinedFeatureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad parameter combinations (n_mels > bins, dropping every numerator term, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or degenerate denominators during numeric work.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Item ids outside the trained vocabulary.
class VocabularyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ocmusic

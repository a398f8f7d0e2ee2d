#pragma once

#include <stdexcept>
#include <string>

namespace lmk {

// Non-finite values where finite ones are required (loss inputs, heatmaps).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Repeated rejection of degenerate random draws.
struct GenerationFailure : std::runtime_error {
    explicit GenerationFailure(const std::string& what) : std::runtime_error(what) {}
};

// Malformed row/field in a text file; message carries the line number.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, int line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line(line) {}
    int line;
};

// Structurally valid file whose rows disagree with each other.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

struct CorruptCheckpoint : std::runtime_error {
    explicit CorruptCheckpoint(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedVersion : std::runtime_error {
    explicit UnsupportedVersion(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lmk

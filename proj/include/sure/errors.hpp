#pragma once

#include <stdexcept>
#include <string>

namespace sure {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (corpus, dataset, transcript, trace, index dump).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration detected before any backend call.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model response that cannot be turned into the structure a stage needs.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Network or HTTP failure after the retry budget is exhausted.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Replay backend has no recorded response for a request.
class TranscriptMiss : public Error {
public:
    TranscriptMiss(std::string digest, std::string prompt_echo)
        : Error("transcript miss for digest " + digest + "; prompt: " + prompt_echo),
          digest_(std::move(digest)),
          prompt_echo_(std::move(prompt_echo)) {}

    const std::string& digest() const noexcept { return digest_; }
    const std::string& prompt_echo() const noexcept { return prompt_echo_; }

private:
    std::string digest_;
    std::string prompt_echo_;
};

/// Response-cache read or write failure.
class CacheError : public Error {
public:
    using Error::Error;
};

}  // namespace sure

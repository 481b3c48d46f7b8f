#pragma once

#include <stdexcept>
#include <string>

namespace opera {

/// Base of every error raised by the library. `what()` carries a readable
/// message; the concrete type identifies the failure class.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input errors. The CLI maps all of these to exit code 2.
class MalformedDocument : public Error { public: using Error::Error; };
class UnsupportedFeature : public Error { public: using Error::Error; };
class UnknownSyllable : public Error {
public:
    explicit UnknownSyllable(std::string syllable)
        : Error("unknown syllable: '" + syllable + "'"), syllable_(std::move(syllable)) {}
    const std::string& syllable() const noexcept { return syllable_; }

private:
    std::string syllable_;
};
class FormatError : public Error { public: using Error::Error; };
class OverlapError : public Error { public: using Error::Error; };
class InfeasibleNote : public Error { public: using Error::Error; };
class UnknownPhoneme : public Error { public: using Error::Error; };
class DegenerateComponent : public Error { public: using Error::Error; };
class WindowTooShort : public Error { public: using Error::Error; };
class NonPositiveFrequency : public Error { public: using Error::Error; };
class OffGrid : public Error { public: using Error::Error; };
class EmptyTrack : public Error { public: using Error::Error; };
class LengthMismatch : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class InvalidDistribution : public Error { public: using Error::Error; };

/// Raised when an internal postcondition fails (CLI exit code 3).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace opera

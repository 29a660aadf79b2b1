#pragma once

#include <stdexcept>
#include <string>

namespace spotdiff {

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SPOTDIFF_DEFINE_ERROR(Name)         \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(#Name ": " + what) {}       \
  }

SPOTDIFF_DEFINE_ERROR(InvalidWindow);
SPOTDIFF_DEFINE_ERROR(ShapeMismatch);
SPOTDIFF_DEFINE_ERROR(InvalidGeometry);
SPOTDIFF_DEFINE_ERROR(InvalidArgument);
SPOTDIFF_DEFINE_ERROR(InvalidConfig);
SPOTDIFF_DEFINE_ERROR(NumericalFailure);
SPOTDIFF_DEFINE_ERROR(FixtureExhausted);
SPOTDIFF_DEFINE_ERROR(FixtureDiverged);
SPOTDIFF_DEFINE_ERROR(ProtocolError);
SPOTDIFF_DEFINE_ERROR(ProtocolTimeout);
SPOTDIFF_DEFINE_ERROR(CalibrationFailed);
SPOTDIFF_DEFINE_ERROR(IoError);

#undef SPOTDIFF_DEFINE_ERROR

}  // namespace spotdiff

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfl {

enum class ErrorCode {
    InvalidDimension,
    InvalidArgument,
    UnsupportedDensity,
    SingularInput,
    CollisionDetected,
    NonfiniteState,
    TooLarge,
    WindowTooCoarse,
    InvalidBeta,
    UnsupportedDimension,
    InvalidWindow,
    ScaleOrder,
    NormConditionsViolated,
    WindowMissing,
    ConditionViolated,
    NonintegrableKernel,
    SupportOverflow,
    MisalignedTimes,
    ConfigInvalid,
};

const char* errorCodeName(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by the exact field when two particles come closer than the threshold.
class CollisionError : public Error {
public:
    CollisionError(std::size_t i, std::size_t j, double distance);
    std::size_t i, j;
    double distance;
};

} // namespace mfl

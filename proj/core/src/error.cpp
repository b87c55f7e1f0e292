#include "mfl/error.hpp"

#include <sstream>

namespace mfl {

const char* errorCodeName(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidDimension: return "invalid-dimension";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::UnsupportedDensity: return "unsupported-density";
    case ErrorCode::SingularInput: return "singular-input";
    case ErrorCode::CollisionDetected: return "collision-detected";
    case ErrorCode::NonfiniteState: return "nonfinite-state";
    case ErrorCode::TooLarge: return "too-large";
    case ErrorCode::WindowTooCoarse: return "window-too-coarse";
    case ErrorCode::InvalidBeta: return "invalid-beta";
    case ErrorCode::UnsupportedDimension: return "unsupported-dimension";
    case ErrorCode::InvalidWindow: return "invalid-window";
    case ErrorCode::ScaleOrder: return "scale-order";
    case ErrorCode::NormConditionsViolated: return "norm-conditions-violated";
    case ErrorCode::WindowMissing: return "window-missing";
    case ErrorCode::ConditionViolated: return "condition-violated";
    case ErrorCode::NonintegrableKernel: return "nonintegrable-kernel";
    case ErrorCode::SupportOverflow: return "support-overflow";
    case ErrorCode::MisalignedTimes: return "misaligned-times";
    case ErrorCode::ConfigInvalid: return "config-invalid";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(errorCodeName(code)) + ": " + what), code_(code)
{
}

static std::string collisionMessage(std::size_t i, std::size_t j, double d)
{
    std::ostringstream os;
    os << "particles " << i << " and " << j << " at distance " << d;
    return os.str();
}

CollisionError::CollisionError(std::size_t i_, std::size_t j_, double distance_)
    : Error(ErrorCode::CollisionDetected, collisionMessage(i_, j_, distance_)), i(i_), j(j_),
      distance(distance_)
{
}

} // namespace mfl

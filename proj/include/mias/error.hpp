// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mias {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    ShapeMismatch,
    HeterogeneousShape,
    CorruptHeader,
    TruncatedRecord,
    Io,
    WindowExceedsGrid,
    EmptyTrainingSet,
    NotFrozen,
    TargetTooSmall,
    AllZeroMap,
    ConstantMap,
    PromptOutOfBounds,
    SingleClass,
    MissingPrediction,
    MissingMask,
    EmptySplit,
    DecoderFailure,
    Timeout,
    ProtocolVersion,
    MalformedResponse,
    Config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what);

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

#define MIAS_THROW_IF_NOT(cond, code, msg)           \
    do {                                             \
        if (!(cond)) {                               \
            throw ::mias::Error((code), (msg));      \
        }                                            \
    } while (false)

} // namespace mias

// SPDX-License-Identifier: Apache-2.0
#include "mias/error.hpp"

namespace mias {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::DimensionMismatch: return "dimension-mismatch";
        case ErrorCode::ShapeMismatch: return "shape-mismatch";
        case ErrorCode::HeterogeneousShape: return "heterogeneous-shape";
        case ErrorCode::CorruptHeader: return "corrupt-header";
        case ErrorCode::TruncatedRecord: return "truncated-record";
        case ErrorCode::Io: return "io";
        case ErrorCode::WindowExceedsGrid: return "window-exceeds-grid";
        case ErrorCode::EmptyTrainingSet: return "empty-training-set";
        case ErrorCode::NotFrozen: return "not-frozen";
        case ErrorCode::TargetTooSmall: return "target-smaller-than-grid";
        case ErrorCode::AllZeroMap: return "all-zero-map";
        case ErrorCode::ConstantMap: return "constant-map";
        case ErrorCode::PromptOutOfBounds: return "prompt-out-of-bounds";
        case ErrorCode::SingleClass: return "single-class";
        case ErrorCode::MissingPrediction: return "missing-prediction";
        case ErrorCode::MissingMask: return "missing-mask";
        case ErrorCode::EmptySplit: return "empty-split";
        case ErrorCode::DecoderFailure: return "decoder-failure";
        case ErrorCode::Timeout: return "timeout";
        case ErrorCode::ProtocolVersion: return "protocol-version-mismatch";
        case ErrorCode::MalformedResponse: return "malformed-response";
        case ErrorCode::Config: return "config";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

} // namespace mias

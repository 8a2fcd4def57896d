// Copyright 2026 The Prompted-TTS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prompted_tts/error.h"

namespace prompted_tts {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kUnknownSymbol: return "UnknownSymbol";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kUnknownSpeaker: return "UnknownSpeaker";
    case ErrorKind::kDurationMismatch: return "DurationMismatch";
    case ErrorKind::kEmptyOutput: return "EmptyOutput";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kInputTooShort: return "InputTooShort";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kDuplicateId: return "DuplicateId";
    case ErrorKind::kUnknownEmotion: return "UnknownEmotion";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kSampleRateMismatch: return "SampleRateMismatch";
    case ErrorKind::kEmptyPoolForLabel: return "EmptyPoolForLabel";
    case ErrorKind::kFormatError: return "FormatError";
    case ErrorKind::kTruncatedFile: return "TruncatedFile";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kResumeMismatch: return "ResumeMismatch";
    case ErrorKind::kZeroVector: return "ZeroVector";
    case ErrorKind::kDegenerateMarginal: return "DegenerateMarginal";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kUnknownLabel: return "UnknownLabel";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool IsDataError(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFiniteLoss:
    case ErrorKind::kIoError:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
      kind_(kind) {}

}  // namespace prompted_tts

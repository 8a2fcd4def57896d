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

#ifndef PROMPTED_TTS_ERROR_H_
#define PROMPTED_TTS_ERROR_H_

#include <stdexcept>
#include <string>

namespace prompted_tts {

enum class ErrorKind {
  kEmptyInput,
  kUnknownSymbol,
  kDimensionMismatch,
  kUnknownSpeaker,
  kDurationMismatch,
  kEmptyOutput,
  kShapeMismatch,
  kInputTooShort,
  kParseError,
  kDuplicateId,
  kUnknownEmotion,
  kIoError,
  kSampleRateMismatch,
  kEmptyPoolForLabel,
  kFormatError,
  kTruncatedFile,
  kNonFiniteLoss,
  kResumeMismatch,
  kZeroVector,
  kDegenerateMarginal,
  kLengthMismatch,
  kUnknownLabel,
  kConfigError,
};

// Name used in diagnostics, e.g. "UnknownSymbol".
const char* ErrorKindName(ErrorKind kind);

// Whether the error stems from bad input data rather than a runtime failure.
// The CLI maps the former to exit code 2 and the latter to 3.
bool IsDataError(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }
  const char* kind_name() const { return ErrorKindName(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_ERROR_H_

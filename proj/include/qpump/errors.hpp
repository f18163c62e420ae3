#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qpump {

enum class ErrorCode {
  SingularMatrix,
  NoConvergence,
  NotHermitian,
  PhaseJump,
  ParseError,
  ValidationError,
  UnknownPreset,
  InvalidParameter,
  OnSpectrum,
  DegenerateSplit,
  StepTooLarge,
  GapClosed,
  NotInteger,
  DegenerateLink,
  PatchSingular,
  DegenerateCrossing,
  MatchingSingular,
  SystemSingular,
  UnderResolved,
  EquivalenceFailed,
};

std::string_view error_name(ErrorCode code);

/// Process exit status for an error raised by a CLI command.
/// 2 validation, 3 gap closed, 4 degenerate configuration, 5 equivalence
/// failure, 1 for numerical failures that fit none of these.
int exit_code(ErrorCode code);

/// The single exception type of the library. `detail` carries the numeric
/// context of the failure (condition estimate, offending phase s, residual).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, double detail = std::nan(""))
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  double detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  double detail_;
};

}  // namespace qpump

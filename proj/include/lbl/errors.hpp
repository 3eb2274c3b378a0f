#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lbl {

enum class ErrorKind {
  // input / validation failures
  ShapeMismatch,
  NotStochastic,
  InvalidArgument,
  ModelMismatch,
  FeatureTooLarge,
  HorizonExceeded,
  StageNotFrozen,
  TooLarge,
  TooShort,
  InsufficientData,
  Config,
  // numerical failures
  DegenerateLikelihood,
  NotMixing,
  RankDeficient,
  NearSingularPivot,
  DiagonalizationFailed,
  NonFinite,
  SingularA,
};

std::string_view to_string(ErrorKind kind);

/// True for the kinds that signal a numerical breakdown rather than bad input.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lbl

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace haarlab {

enum class ErrorCode {
  TypeMismatch,
  EmptyRequest,
  DomainMismatch,
  InvariantViolation,
  HomomorphismCheckFailed,
  BijectionUnverified,
  NotInvertible,
  EmptyFamily,
  UnbinnableDomain,
  UndersampledBins,
  ResidualExceedsTol,
  NotCoordinateFixing,
  SignNotConstant,
  Discontinuous,
  FirstCoordinateMismatch,
  NotTriangular,
  OrderTooLarge,
  IdentityNotFixed,
  ParseError,
  UnsupportedCombination,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::EmptyRequest: return "EmptyRequest";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::HomomorphismCheckFailed: return "HomomorphismCheckFailed";
    case ErrorCode::BijectionUnverified: return "BijectionUnverified";
    case ErrorCode::NotInvertible: return "NotInvertible";
    case ErrorCode::EmptyFamily: return "EmptyFamily";
    case ErrorCode::UnbinnableDomain: return "UnbinnableDomain";
    case ErrorCode::UndersampledBins: return "UndersampledBins";
    case ErrorCode::ResidualExceedsTol: return "ResidualExceedsTol";
    case ErrorCode::NotCoordinateFixing: return "NotCoordinateFixing";
    case ErrorCode::SignNotConstant: return "SignNotConstant";
    case ErrorCode::Discontinuous: return "Discontinuous";
    case ErrorCode::FirstCoordinateMismatch: return "FirstCoordinateMismatch";
    case ErrorCode::NotTriangular: return "NotTriangular";
    case ErrorCode::OrderTooLarge: return "OrderTooLarge";
    case ErrorCode::IdentityNotFixed: return "IdentityNotFixed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedCombination: return "UnsupportedCombination";
  }
  return "Unknown";
}

/// Library-wide exception. Numerical rejections (residuals, jumps, defects)
/// carry the offending measurement so callers can report it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        double measured = std::numeric_limits<double>::quiet_NaN())
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        measured_(measured) {}

  ErrorCode code() const noexcept { return code_; }
  double measured() const noexcept { return measured_; }
  bool has_measurement() const noexcept { return !std::isnan(measured_); }

 private:
  ErrorCode code_;
  double measured_;
};

}  // namespace haarlab

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "haarlab/error.hpp"
#include "haarlab/group.hpp"

namespace haarlab {

struct TrigTerm {
  std::vector<std::int64_t> frequency;
  double cos_amp = 0.0;
  double sin_amp = 0.0;
  bool operator==(const TrigTerm&) const = default;
};

/// Continuous map T^k -> T given by an integer winding vector plus a finite
/// trigonometric polynomial:
///
///   g(x) = winding . x + constant + sum_q cos_q cos(2 pi q.x) + sin_q sin(2 pi q.x)   (mod 1)
///
/// Integer winding makes g well defined on the torus.
class CircleFunction {
 public:
  CircleFunction(std::vector<std::int64_t> winding, double constant, std::vector<TrigTerm> terms = {})
      : winding_(std::move(winding)), constant_(constant), terms_(std::move(terms)) {
    if (winding_.empty()) throw Error(ErrorCode::InvariantViolation, "circle function needs arity >= 1");
    for (const auto& t : terms_) {
      if (t.frequency.size() != winding_.size())
        throw Error(ErrorCode::InvariantViolation, "frequency vector length differs from arity");
      bool nonzero = false;
      for (auto q : t.frequency) nonzero = nonzero || q != 0;
      if (!nonzero) throw Error(ErrorCode::InvariantViolation, "frequency vector must be non-zero");
      if (!std::isfinite(t.cos_amp) || !std::isfinite(t.sin_amp))
        throw Error(ErrorCode::InvariantViolation, "non-finite amplitude");
    }
    if (!std::isfinite(constant_)) throw Error(ErrorCode::InvariantViolation, "non-finite constant");
  }

  static CircleFunction constant(int arity, double c) {
    return CircleFunction(std::vector<std::int64_t>(static_cast<std::size_t>(arity), 0), c);
  }

  int arity() const noexcept { return static_cast<int>(winding_.size()); }
  const std::vector<std::int64_t>& winding() const noexcept { return winding_; }
  double constant_term() const noexcept { return constant_; }
  const std::vector<TrigTerm>& terms() const noexcept { return terms_; }

  /// Real-valued lift (not reduced mod 1).
  double lift(std::span<const double> x) const {
    if (static_cast<int>(x.size()) < arity()) throw Error(ErrorCode::TypeMismatch, "too few arguments");
    double v = constant_;
    for (std::size_t j = 0; j < winding_.size(); ++j) v += static_cast<double>(winding_[j]) * x[j];
    for (const auto& t : terms_) {
      double phase = 0.0;
      for (std::size_t j = 0; j < winding_.size(); ++j) phase += static_cast<double>(t.frequency[j]) * x[j];
      phase = 2.0 * std::numbers::pi * wrap01(phase);
      v += t.cos_amp * std::cos(phase) + t.sin_amp * std::sin(phase);
    }
    return v;
  }

  double operator()(std::span<const double> x) const { return wrap01(lift(x)); }
  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  CircleFunction negated() const {
    std::vector<std::int64_t> w(winding_);
    for (auto& v : w) v = -v;
    std::vector<TrigTerm> t(terms_);
    for (auto& term : t) {
      term.cos_amp = -term.cos_amp;
      term.sin_amp = -term.sin_amp;
    }
    return CircleFunction(std::move(w), -constant_, std::move(t));
  }

  /// Largest |q|_inf among the terms (0 for a pure affine function).
  std::int64_t max_frequency() const {
    std::int64_t m = 0;
    for (const auto& t : terms_)
      for (auto q : t.frequency) m = std::max(m, q < 0 ? -q : q);
    return m;
  }

  bool operator==(const CircleFunction&) const = default;

 private:
  std::vector<std::int64_t> winding_;
  double constant_;
  std::vector<TrigTerm> terms_;
};

}  // namespace haarlab

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tscl {

enum class Activation { ErfScaled, Linear, Relu };

/// g(x) = erf(x / sqrt 2), x, or max(0, x).
inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::ErfScaled: return std::erf(x * (1.0 / std::numbers::sqrt2));
    case Activation::Linear: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  return 0.0;
}

/// g'(x). For ReLU g'(0) is taken as 0.
inline double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::ErfScaled:
      return std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * x * x);
    case Activation::Linear: return 1.0;
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ErfScaled: return "erf";
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "erf" || s == "scaled_erf") return Activation::ErfScaled;
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

}  // namespace tscl

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace serec {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Exposure priors handed to the rating engine are kept inside this band so
// that every log term of the marginal likelihood stays finite.
inline constexpr double kMuFloor = 1e-6;
inline constexpr double kMuCeil = 1.0 - 1e-6;

inline double clamp_mu(double mu) {
  return mu < kMuFloor ? kMuFloor : (mu > kMuCeil ? kMuCeil : mu);
}

// Input file could not be parsed. Carries the 1-based line number (0 when the
// problem is not tied to a line, e.g. an empty file).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Numerical failure during training (NaN/Inf, divergence).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace serec

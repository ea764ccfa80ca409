#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mriccati {

// Malformed or inconsistent input (shapes, orientation, non-finite data).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An iterative solve ran out of iterations. Carries the update history.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

// Symmetry / nonnegativity / duality hypotheses of the monotone solver failed.
class HypothesisViolation : public std::runtime_error {
 public:
  HypothesisViolation(const std::string& what, std::optional<std::size_t> node)
      : std::runtime_error(what), node_(node) {}

  std::optional<std::size_t> node() const noexcept { return node_; }

 private:
  std::optional<std::size_t> node_;
};

// Numerical breakdown: singular step system or a non-finite state.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::optional<std::size_t> node)
      : std::runtime_error(what), node_(node) {}

  std::optional<std::size_t> node() const noexcept { return node_; }

 private:
  std::optional<std::size_t> node_;
};

}  // namespace mriccati

#pragma once

// Time grids, grid-sampled operator functions and two-parameter evolution
// families.
//
// A forward family U(t, s), s <= t, and a backward family V(t, s), t <= s,
// are stored through their one-step propagators only. Values at
// non-adjacent node pairs are ordered products of steps, so U(s, s) = I and
// U(t, s) = U(t, r) U(r, s) hold by construction, and memory is O(N).

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/linops.hpp"

namespace mriccati {

/// Uniform partition t_i = i * T / N of [0, T]. T = 0 collapses to one node.
class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!std::isfinite(horizon) || horizon < 0.0) {
      throw InvalidInput("TimeGrid: horizon must be finite and nonnegative");
    }
    if (horizon == 0.0) {
      steps_ = 0;
    } else if (steps == 0) {
      throw InvalidInput("TimeGrid: at least one step is required when T > 0");
    }
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }
  std::size_t last() const noexcept { return steps_; }
  double step_size() const noexcept {
    return steps_ == 0 ? 0.0 : horizon_ / static_cast<double>(steps_);
  }
  double node(std::size_t i) const noexcept {
    if (i == steps_) return horizon_;
    return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
  }
  double midpoint(std::size_t i) const noexcept {
    return horizon_ * (static_cast<double>(i) + 0.5) / static_cast<double>(steps_);
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
  }

 private:
  double horizon_ = 0.0;
  std::size_t steps_ = 0;
};

/// Matrix-valued function of time sampled at the grid nodes and, optionally,
/// at the interval midpoints (needed for generators and for the ODE oracle).
class OperatorFunction {
 public:
  using Sampler = std::function<Matrix(double)>;

  OperatorFunction() = default;

  OperatorFunction(TimeGrid grid, std::vector<Matrix> nodes, std::vector<Matrix> midpoints = {})
      : grid_(grid), nodes_(std::move(nodes)), midpoints_(std::move(midpoints)) {
    if (nodes_.size() != grid_.size()) {
      throw InvalidInput("OperatorFunction: expected one sample per grid node");
    }
    if (!midpoints_.empty() && midpoints_.size() != grid_.steps()) {
      throw InvalidInput("OperatorFunction: expected one midpoint sample per interval");
    }
    const auto rows = nodes_.front().rows();
    const auto cols = nodes_.front().cols();
    if (rows < 1 || cols < 1) throw InvalidInput("OperatorFunction: empty samples");
    auto check = [&](const Matrix& m) {
      if (m.rows() != rows || m.cols() != cols) {
        throw InvalidInput("OperatorFunction: samples must share one shape");
      }
      if (!all_finite(m)) throw InvalidInput("OperatorFunction: non-finite sample");
    };
    for (const auto& m : nodes_) check(m);
    for (const auto& m : midpoints_) check(m);
  }

  static OperatorFunction sample(const TimeGrid& grid, const Sampler& f, bool with_midpoints) {
    std::vector<Matrix> nodes;
    nodes.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) nodes.push_back(f(grid.node(i)));
    std::vector<Matrix> mids;
    if (with_midpoints) {
      mids.reserve(grid.steps());
      for (std::size_t i = 0; i < grid.steps(); ++i) mids.push_back(f(grid.midpoint(i)));
    }
    return OperatorFunction(grid, std::move(nodes), std::move(mids));
  }

  static OperatorFunction constant(const TimeGrid& grid, const Matrix& m,
                                   bool with_midpoints = true) {
    return sample(grid, [&](double) { return m; }, with_midpoints);
  }

  static OperatorFunction zeros(const TimeGrid& grid, Eigen::Index rows, Eigen::Index cols,
                                bool with_midpoints = true) {
    return constant(grid, Matrix::Zero(rows, cols), with_midpoints);
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Eigen::Index rows() const { return nodes_.front().rows(); }
  Eigen::Index cols() const { return nodes_.front().cols(); }
  bool has_midpoints() const noexcept { return !midpoints_.empty() || grid_.steps() == 0; }

  const Matrix& operator[](std::size_t i) const { return nodes_[i]; }
  const Matrix& at(std::size_t i) const { return nodes_.at(i); }
  const Matrix& midpoint(std::size_t i) const {
    if (midpoints_.empty()) throw InvalidInput("OperatorFunction: no midpoint samples");
    return midpoints_.at(i);
  }
  const std::vector<Matrix>& nodes() const noexcept { return nodes_; }
  const std::vector<Matrix>& midpoints() const noexcept { return midpoints_; }

  /// sup over nodes (and midpoints, when present) of the spectral norm.
  double sup_norm() const {
    double s = 0.0;
    for (const auto& m : nodes_) s = std::max(s, op_norm(m));
    for (const auto& m : midpoints_) s = std::max(s, op_norm(m));
    return s;
  }

  template <typename F>
  OperatorFunction map(F&& f) const {
    std::vector<Matrix> nodes;
    nodes.reserve(nodes_.size());
    for (const auto& m : nodes_) nodes.push_back(f(m));
    std::vector<Matrix> mids;
    mids.reserve(midpoints_.size());
    for (const auto& m : midpoints_) mids.push_back(f(m));
    return OperatorFunction(grid_, std::move(nodes), std::move(mids));
  }

  OperatorFunction transposed() const {
    return map([](const Matrix& m) -> Matrix { return m.transpose(); });
  }

 private:
  TimeGrid grid_;
  std::vector<Matrix> nodes_;
  std::vector<Matrix> midpoints_;
};

/// max over nodes of the spectral-norm difference.
inline double sup_distance(const OperatorFunction& a, const OperatorFunction& b) {
  if (!(a.grid() == b.grid())) throw InvalidInput("sup_distance: grid mismatch");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("sup_distance: shape mismatch");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, op_norm(a[i] - b[i]));
  return d;
}

enum class Direction { forward, backward };

inline const char* to_string(Direction d) {
  return d == Direction::forward ? "forward" : "backward";
}

/// Default budget of (t, s) pairs inspected when certifying sup ||U(t, s)||.
inline constexpr std::size_t kDefaultBoundPairs = 20000;

class EvolutionFamily {
 public:
  EvolutionFamily() = default;

  /// Family from step data. Forward: steps[i] maps t_i to t_{i+1}.
  /// Backward: steps[i] maps t_{i+1} to t_i, i.e. V(t_i, t_{i+1}).
  EvolutionFamily(TimeGrid grid, Direction direction, std::vector<Matrix> steps)
      : grid_(grid),
        direction_(direction),
        steps_(std::move(steps)),
        bound_(std::make_shared<BoundCache>()) {
    if (steps_.size() != grid_.steps()) {
      throw InvalidInput("EvolutionFamily: expected one propagator per grid interval");
    }
    if (!steps_.empty()) {
      dim_ = steps_.front().rows();
      for (std::size_t i = 0; i < steps_.size(); ++i) {
        const auto& s = steps_[i];
        if (s.rows() != dim_ || s.cols() != dim_) {
          throw InvalidInput("EvolutionFamily: step " + std::to_string(i) +
                             " is not square of the common dimension");
        }
        if (!all_finite(s)) {
          throw InvalidInput("EvolutionFamily: step " + std::to_string(i) + " is not finite");
        }
      }
    }
  }

  /// Degenerate family on a one-node grid still needs to know its dimension.
  EvolutionFamily(TimeGrid grid, Direction direction, std::vector<Matrix> steps,
                  Eigen::Index dimension)
      : EvolutionFamily(grid, direction, std::move(steps)) {
    if (!steps_.empty() && dimension != dim_) {
      throw InvalidInput("EvolutionFamily: dimension does not match step data");
    }
    dim_ = dimension;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  Direction direction() const noexcept { return direction_; }
  Eigen::Index dimension() const noexcept { return dim_; }
  const std::vector<Matrix>& steps() const noexcept { return steps_; }
  const Matrix& step(std::size_t i) const { return steps_.at(i); }

  /// U(t_i, t_j): forward needs i >= j, backward needs i <= j.
  Matrix value(std::size_t i, std::size_t j) const {
    if (i >= grid_.size() || j >= grid_.size()) {
      throw InvalidInput("EvolutionFamily::value: node index out of range");
    }
    Matrix m = Matrix::Identity(dim_, dim_);
    if (direction_ == Direction::forward) {
      if (i < j) throw InvalidInput("EvolutionFamily::value: forward family needs i >= j");
      for (std::size_t k = j; k < i; ++k) m = steps_[k] * m;
    } else {
      if (i > j) throw InvalidInput("EvolutionFamily::value: backward family needs i <= j");
      for (std::size_t k = j; k > i; --k) m = steps_[k - 1] * m;
    }
    return m;
  }

  /// Certified sup of ||U(t, s)|| over sampled grid pairs, at least 1.
  /// Computed once on first use; copies share the cached value.
  double bound() const {
    std::call_once(bound_->flag, [this] { bound_->value = sampled_bound(kDefaultBoundPairs); });
    return bound_->value;
  }

  /// Every pair when the grid is small enough; otherwise all pairs issued
  /// from evenly spaced anchor nodes.
  double sampled_bound(std::size_t max_pairs) const {
    double best = 1.0;
    const std::size_t n = grid_.size();
    const std::size_t anchors =
        std::clamp<std::size_t>(max_pairs / std::max<std::size_t>(n, 1), 1, n);
    const std::size_t stride = std::max<std::size_t>(1, n / anchors);
    auto visit = [&](std::size_t anchor) {
      Matrix m = Matrix::Identity(dim_, dim_);
      if (direction_ == Direction::forward) {
        for (std::size_t k = anchor; k < grid_.steps(); ++k) {
          m = steps_[k] * m;
          best = std::max(best, op_norm(m));
        }
      } else {
        for (std::size_t k = anchor; k > 0; --k) {
          m = steps_[k - 1] * m;
          best = std::max(best, op_norm(m));
        }
      }
    };
    for (std::size_t a = 0; a < n; a += stride) visit(a);
    visit(direction_ == Direction::forward ? 0 : grid_.last());
    return best;
  }

 private:
  friend EvolutionFamily adjoint_backward_family(const EvolutionFamily& forward);

  struct BoundCache {
    std::once_flag flag;
    double value = 1.0;
  };

  TimeGrid grid_;
  Direction direction_ = Direction::forward;
  std::vector<Matrix> steps_;
  Eigen::Index dim_ = 0;
  std::shared_ptr<BoundCache> bound_ = std::make_shared<BoundCache>();
};

inline Matrix family_value(const EvolutionFamily& family, std::size_t i, std::size_t j) {
  return family.value(i, j);
}

/// One-step propagator exp(h A(t_{i+1/2})) (midpoint Magnus, order 2).
inline Matrix propagate_step(const OperatorFunction& generator, std::size_t i) {
  if (generator.rows() != generator.cols()) {
    throw InvalidInput("propagate_step: generator must be square");
  }
  if (i >= generator.grid().steps()) throw InvalidInput("propagate_step: step index out of range");
  const Matrix& a = generator.midpoint(i);
  if (!all_finite(a)) throw InvalidInput("propagate_step: non-finite generator sample");
  const Matrix scaled = generator.grid().step_size() * a;
  return scaled.exp();
}

inline EvolutionFamily build_forward_family(const OperatorFunction& generator) {
  if (generator.rows() != generator.cols()) {
    throw InvalidInput("build_forward_family: generator must be square");
  }
  if (!generator.has_midpoints()) {
    throw InvalidInput("build_forward_family: generator needs midpoint samples");
  }
  std::vector<Matrix> steps;
  steps.reserve(generator.grid().steps());
  for (std::size_t i = 0; i < generator.grid().steps(); ++i) {
    steps.push_back(propagate_step(generator, i));
  }
  return EvolutionFamily(generator.grid(), Direction::forward, std::move(steps), generator.rows());
}

/// V(t, s) = U(s, t)^T. The bound is shared with the forward family.
inline EvolutionFamily adjoint_backward_family(const EvolutionFamily& forward) {
  if (forward.direction() != Direction::forward) {
    throw InvalidInput("adjoint_backward_family: input must be a forward family");
  }
  std::vector<Matrix> steps;
  steps.reserve(forward.steps().size());
  for (const auto& s : forward.steps()) steps.push_back(s.transpose());
  EvolutionFamily out(forward.grid(), Direction::backward, std::move(steps), forward.dimension());
  out.bound_ = forward.bound_;
  return out;
}

inline EvolutionFamily identity_family(const TimeGrid& grid, Eigen::Index dim, Direction dir) {
  return EvolutionFamily(grid, dir,
                         std::vector<Matrix>(grid.steps(), Matrix::Identity(dim, dim)), dim);
}

/// Two-parameter family stored densely, for data that does not come from
/// step propagators (closed forms, externally assembled tables).
class TabulatedFamily {
 public:
  TabulatedFamily(TimeGrid grid, Direction direction, Eigen::Index dim)
      : grid_(grid), direction_(direction), dim_(dim), values_(grid.size() * grid.size()) {}

  static TabulatedFamily from(const EvolutionFamily& f) {
    TabulatedFamily t(f.grid(), f.direction(), f.dimension());
    for (std::size_t i = 0; i < f.grid().size(); ++i) {
      for (std::size_t j = 0; j < f.grid().size(); ++j) {
        if (t.oriented(i, j)) t.set(i, j, f.value(i, j));
      }
    }
    return t;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  Direction direction() const noexcept { return direction_; }
  Eigen::Index dimension() const noexcept { return dim_; }

  bool oriented(std::size_t i, std::size_t j) const noexcept {
    return direction_ == Direction::forward ? i >= j : i <= j;
  }

  void set(std::size_t i, std::size_t j, Matrix m) {
    if (!oriented(i, j)) throw InvalidInput("TabulatedFamily::set: orientation violation");
    values_.at(i * grid_.size() + j) = std::move(m);
  }

  Matrix value(std::size_t i, std::size_t j) const {
    if (!oriented(i, j)) throw InvalidInput("TabulatedFamily::value: orientation violation");
    const Matrix& m = values_.at(i * grid_.size() + j);
    if (m.size() == 0) return Matrix::Identity(dim_, dim_);
    return m;
  }

 private:
  TimeGrid grid_;
  Direction direction_;
  Eigen::Index dim_;
  std::vector<Matrix> values_;
};

/// max ||U(t, s) - U(t, r) U(r, s)|| over grid triples; every triple on small
/// grids, a fixed-seed random sample of `max_triples` otherwise.
template <typename Family>
double check_semigroup(const Family& family, std::size_t max_triples = 20000) {
  const std::size_t n = family.grid().size();
  const bool fwd = family.direction() == Direction::forward;
  double worst = 0.0;
  auto probe = [&](std::size_t lo, std::size_t mid, std::size_t hi) {
    // forward: (t, r, s) = (hi, mid, lo); backward: (t, r, s) = (lo, mid, hi)
    const Matrix whole = fwd ? family.value(hi, lo) : family.value(lo, hi);
    const Matrix split = fwd ? Matrix(family.value(hi, mid) * family.value(mid, lo))
                             : Matrix(family.value(lo, mid) * family.value(mid, hi));
    worst = std::max(worst, op_norm(whole - split));
  };
  const double total = static_cast<double>(n) * (n + 1) * (n + 2) / 6.0;
  if (total <= static_cast<double>(max_triples)) {
    for (std::size_t lo = 0; lo < n; ++lo)
      for (std::size_t mid = lo; mid < n; ++mid)
        for (std::size_t hi = mid; hi < n; ++hi) probe(lo, mid, hi);
  } else {
    std::mt19937_64 rng(0x5eed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < max_triples; ++k) {
      std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
      if (a > b) std::swap(a, b);
      if (b > c) std::swap(b, c);
      if (a > b) std::swap(a, b);
      probe(a, b, c);
    }
  }
  return worst;
}

}  // namespace mriccati

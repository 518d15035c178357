#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "memcap/linalg.hpp"

namespace memcap {

/// Depth-2 ReLU network c(x) = sum_j w_j * max(<a, x> - b_j, 0) that
/// reproduces n target values on n distinct sample points.
///
/// Stored parameters: a (d), b (n), w (n), i.e. exactly d + 2n numbers.
/// sort_order[i] is the position of original sample i after sorting by
/// projection.
struct InterpolatorNet {
  Vector a;
  Vector b;
  Vector w;
  std::vector<std::size_t> sort_order;

  std::size_t dim() const { return static_cast<std::size_t>(a.size()); }
  std::size_t samples() const { return static_cast<std::size_t>(b.size()); }
  std::size_t weight_count() const { return dim() + 2 * samples(); }

  std::string to_json() const;
  static InterpolatorNet from_json(const std::string& text);
};

/// n x n matrix A_ij = max(x_i - b_j, 0) for interleaving b_1 < x_1 < ... < b_n < x_n.
struct LemmaMatrix {
  ColMatrix A;
  Vector x;
  Vector b;
};

struct LemmaReport {
  LemmaMatrix matrix;
  bool full_rank = false;
  /// Smallest eigenvalue: the smallest diagonal entry min_i (x_i - b_i).
  double min_eigenvalue = 0.0;
};

/// Throws ValidationError unless b_1 < x_1 < b_2 < ... < b_n < x_n.
LemmaReport lemma_matrix_props(const Vector& x, const Vector& b);

/// Solves A w = y for lower-triangular A by forward substitution.
Vector forward_substitute(const ColMatrix& lower, const Vector& y);

struct Depth2Options {
  /// Fresh random directions tried before reporting a projection collision.
  int resample_budget = 32;
};

/// Builds the exact interpolator. `a` is a random unit vector (resampled until
/// all projections are distinct), b_1 = x_(1) - 1, b_j is the midpoint of the
/// neighbouring sorted projections, and w comes from forward substitution.
/// Throws ValidationError on duplicate rows or an exhausted resample budget.
InterpolatorNet construct_depth2(const Eigen::Ref<const Matrix>& samples, const Vector& y,
                                 std::uint64_t seed, const Depth2Options& options = {});

double eval_interpolator(const InterpolatorNet& net, const Eigen::Ref<const Vector>& x);

/// One per-interval depth-2 block of the layered construction, expressed on the
/// rescaled projection t = (<a, x> - shift) / scale, which lies in [0, 1] on the sample.
struct InterpolatorBlock {
  Vector b;  // breakpoints on t
  Vector w;  // output weights
  std::size_t first = 0;  // first sorted sample index covered
  std::size_t count = 0;  // number of sorted samples covered
};

/// Trapezoid indicator g(t) from four ReLUs:
///   g(t) = [relu(t - rise0) - relu(t - rise1)] / (rise1 - rise0)
///        - [relu(t - fall0) - relu(t - fall1)] / (fall1 - fall0)
/// It is 1 on [rise1, fall0] and 0 for t <= rise0 or t >= fall1.
struct TrapezoidGate {
  double rise0 = 0.0;
  double rise1 = 0.0;
  double fall0 = 0.0;
  double fall1 = 0.0;

  double operator()(double t) const;
};

/// Depth-k ReLU network that trades width for depth.
///
/// The sorted sample is split into k-1 consecutive groups of ceil(n/(k-1))
/// points. Hidden layer 1 computes the rescaled projection t, block 1's ReLUs
/// and gate 1; hidden layer j (2 <= j <= k-1) carries t and two nonnegative
/// accumulators forward, computes block j and gate j, and emits the clamp
/// pair for block j-1:
///   p = relu(c + M g - M),  q = relu(-c + M g - M),
/// which equals (max(c,0), max(-c,0)) when g = 1 and (0, 0) when g = 0 and
/// |c| < M. Hidden layer k emits the last clamp pair; the output layer sums
/// the accumulators. On the sample exactly one gate is 1, so the output is
/// the owning block's value.
///
/// Width and weight bounds (n >= k - 1):
///   widest hidden layer <= ceil(n/(k-1)) + 9 <= kWidthConstant * n / k for k <= n
///   stored parameters    = d + 2n + 8(k-1) + 3 <= kWeightConstant * (n + d)
struct LayeredInterpolator {
  static constexpr double kWidthConstant = 12.0;
  static constexpr double kWeightConstant = 11.0;

  std::size_t depth = 0;  // number of hidden layers, k
  Vector a;               // unit projection direction
  double shift = 0.0;     // t = (<a, x> - shift) / scale
  double scale = 1.0;
  std::vector<InterpolatorBlock> blocks;
  std::vector<TrapezoidGate> gates;
  double bound_m = 0.0;
  std::vector<std::size_t> sort_order;

  std::size_t dim() const { return static_cast<std::size_t>(a.size()); }
  /// Units in each hidden layer of the explicit network, input to output.
  std::vector<std::size_t> layer_widths() const;
  std::size_t max_width() const;
  /// a, shift, scale, every block's (b, w), 4 gate breakpoints and 4 gate
  /// coefficients per gate, and M.
  std::size_t weight_count() const;

  std::string to_json() const;
  static LayeredInterpolator from_json(const std::string& text);
};

/// Throws ValidationError for k outside [2, n + 1] or duplicate rows.
LayeredInterpolator construct_depth_k(const Eigen::Ref<const Matrix>& samples, const Vector& y,
                                      std::size_t k, std::uint64_t seed,
                                      const Depth2Options& options = {});

/// Forward pass through the explicit layered ReLU network.
double eval_interpolator(const LayeredInterpolator& net, const Eigen::Ref<const Vector>& x);

/// Value of block j alone at rescaled projection t.
double eval_block(const InterpolatorBlock& block, double t);

struct FitResidual {
  double max_abs = 0.0;
  /// max_i |c(z_i) - y_i| / (1 + |y_i|)
  double max_rel = 0.0;
};

FitResidual fit_residual(const InterpolatorNet& net, const Eigen::Ref<const Matrix>& samples,
                         const Vector& y);
FitResidual fit_residual(const LayeredInterpolator& net, const Eigen::Ref<const Matrix>& samples,
                         const Vector& y);

}  // namespace memcap

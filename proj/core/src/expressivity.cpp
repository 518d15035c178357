#include "memcap/expressivity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "memcap/error.hpp"
#include "memcap/rng.hpp"

namespace memcap {

namespace {

using nlohmann::json;

double relu(double v) { return v > 0.0 ? v : 0.0; }

void require_distinct_rows(const Eigen::Ref<const Matrix>& samples) {
  std::unordered_set<std::string> seen;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const Eigen::RowVectorXd row = samples.row(i);
    const auto* p = reinterpret_cast<const char*>(row.data());
    if (!seen.emplace(p, p + row.size() * sizeof(double)).second) {
      throw ValidationError("sample rows must be distinct; row " + std::to_string(i) +
                            " repeats an earlier row");
    }
  }
}

// Breakpoints for sorted projections: first sits 1 below x_1, the rest at midpoints.
Vector interleaving_breakpoints(const Vector& x_sorted, double first_offset) {
  Vector b(x_sorted.size());
  if (x_sorted.size() == 0) return b;
  b(0) = x_sorted(0) - first_offset;
  for (Eigen::Index j = 1; j < x_sorted.size(); ++j) b(j) = 0.5 * (x_sorted(j - 1) + x_sorted(j));
  return b;
}

// Forward substitution on A_ij = max(x_i - b_j, 0) without forming A.
Vector interleaved_weights(const Vector& x, const Vector& b, const Vector& y) {
  const auto n = x.size();
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = y(i);
    for (Eigen::Index j = 0; j < i; ++j) acc -= w(j) * (x(i) - b(j));
    w(i) = acc / (x(i) - b(i));
  }
  return w;
}

struct Projection {
  Vector a;
  Vector sorted;                       // projections in increasing order
  std::vector<std::size_t> by_rank;    // by_rank[r] = original index with rank r
  std::vector<std::size_t> rank_of;    // rank_of[i] = rank of original index i
};

Projection project_distinct(const Eigen::Ref<const Matrix>& samples, std::uint64_t seed,
                            const Depth2Options& options) {
  const auto n = static_cast<std::size_t>(samples.rows());
  const auto d = samples.cols();
  Rng rng(derive_seed(seed, "expressivity.direction"));
  for (int attempt = 0; attempt < std::max(1, options.resample_budget); ++attempt) {
    Projection p;
    p.a.resize(d);
    for (auto& v : p.a) v = rng.normal();
    p.a.normalize();
    const Vector x = samples * p.a;
    p.by_rank.resize(n);
    std::iota(p.by_rank.begin(), p.by_rank.end(), std::size_t{0});
    std::stable_sort(p.by_rank.begin(), p.by_rank.end(),
                     [&](std::size_t l, std::size_t r) { return x(static_cast<Eigen::Index>(l)) < x(static_cast<Eigen::Index>(r)); });
    p.sorted.resize(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) p.sorted(static_cast<Eigen::Index>(r)) = x(static_cast<Eigen::Index>(p.by_rank[r]));
    // Gaps below a few ulps of the projection scale make A numerically singular.
    const double scale = std::max(1.0, p.sorted.cwiseAbs().maxCoeff());
    const double min_gap = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    bool distinct = true;
    for (Eigen::Index r = 1; r < p.sorted.size(); ++r) {
      if (!(p.sorted(r) - p.sorted(r - 1) > min_gap)) {
        distinct = false;
        break;
      }
    }
    if (!distinct) continue;
    p.rank_of.resize(n);
    for (std::size_t r = 0; r < n; ++r) p.rank_of[p.by_rank[r]] = r;
    return p;
  }
  throw ValidationError("projection collision persisted after " +
                        std::to_string(options.resample_budget) + " random directions");
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// -- Lemma matrix -------------------------------------------------------------

Vector forward_substitute(const ColMatrix& lower, const Vector& y) {
  const auto n = lower.rows();
  if (lower.cols() != n || y.size() != n) throw ValidationError("forward_substitute: shape mismatch");
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = y(i);
    for (Eigen::Index j = 0; j < i; ++j) acc -= lower(i, j) * w(j);
    if (lower(i, i) == 0.0) throw NumericError("forward_substitute: zero pivot at row " + std::to_string(i));
    w(i) = acc / lower(i, i);
  }
  return w;
}

LemmaReport lemma_matrix_props(const Vector& x, const Vector& b) {
  const auto n = x.size();
  if (n == 0 || b.size() != n) throw ValidationError("lemma_matrix_props: x and b must be nonempty and equal length");
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool ok = b(i) < x(i) && (i + 1 == n || x(i) < b(i + 1));
    if (!ok) throw ValidationError("interleaving b_1 < x_1 < b_2 < ... violated at index " + std::to_string(i));
  }
  LemmaReport rep;
  rep.matrix.x = x;
  rep.matrix.b = b;
  rep.matrix.A.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) rep.matrix.A(i, j) = relu(x(i) - b(j));
  }
  const Vector diag = rep.matrix.A.diagonal();
  rep.full_rank = (diag.array() > 0.0).all();
  rep.min_eigenvalue = diag.minCoeff();
  return rep;
}

// -- Depth 2 ------------------------------------------------------------------

InterpolatorNet construct_depth2(const Eigen::Ref<const Matrix>& samples, const Vector& y,
                                 std::uint64_t seed, const Depth2Options& options) {
  const auto n = samples.rows();
  if (n < 1 || samples.cols() < 1) throw ValidationError("construct_depth2 needs n >= 1 and d >= 1");
  if (y.size() != n) throw ValidationError("construct_depth2: y length must equal sample count");
  require_distinct_rows(samples);

  const Projection p = project_distinct(samples, seed, options);
  Vector y_sorted(n);
  for (Eigen::Index r = 0; r < n; ++r) y_sorted(r) = y(static_cast<Eigen::Index>(p.by_rank[static_cast<std::size_t>(r)]));

  InterpolatorNet net;
  net.a = p.a;
  net.b = interleaving_breakpoints(p.sorted, 1.0);
  net.w = interleaved_weights(p.sorted, net.b, y_sorted);
  net.sort_order = p.rank_of;
  if (!net.w.allFinite()) throw NumericError("construct_depth2: non-finite output weights");
  return net;
}

double eval_interpolator(const InterpolatorNet& net, const Eigen::Ref<const Vector>& x) {
  if (x.size() != net.a.size()) throw ValidationError("eval_interpolator: dimension mismatch");
  const double s = net.a.dot(x);
  double out = 0.0;
  for (Eigen::Index j = 0; j < net.b.size(); ++j) out += net.w(j) * relu(s - net.b(j));
  return out;
}

std::string InterpolatorNet::to_json() const {
  json j;
  j["d"] = dim();
  j["n"] = samples();
  j["a"] = to_vec(a);
  j["b"] = to_vec(b);
  j["w"] = to_vec(w);
  j["sort_order"] = sort_order;
  return j.dump();
}

InterpolatorNet InterpolatorNet::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    InterpolatorNet net;
    net.a = from_vec(j.at("a").get<std::vector<double>>());
    net.b = from_vec(j.at("b").get<std::vector<double>>());
    net.w = from_vec(j.at("w").get<std::vector<double>>());
    net.sort_order = j.at("sort_order").get<std::vector<std::size_t>>();
    if (j.at("d").get<std::size_t>() != net.dim() || j.at("n").get<std::size_t>() != net.samples() ||
        net.w.size() != net.b.size() || net.sort_order.size() != net.samples()) {
      throw ValidationError("inconsistent interpolator JSON shapes");
    }
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad interpolator JSON: ") + e.what());
  }
}

// -- Depth k ------------------------------------------------------------------

double TrapezoidGate::operator()(double t) const {
  return (relu(t - rise0) - relu(t - rise1)) / (rise1 - rise0) -
         (relu(t - fall0) - relu(t - fall1)) / (fall1 - fall0);
}

double eval_block(const InterpolatorBlock& block, double t) {
  double out = 0.0;
  for (Eigen::Index m = 0; m < block.b.size(); ++m) out += block.w(m) * relu(t - block.b(m));
  return out;
}

LayeredInterpolator construct_depth_k(const Eigen::Ref<const Matrix>& samples, const Vector& y,
                                      std::size_t k, std::uint64_t seed,
                                      const Depth2Options& options) {
  const auto n = static_cast<std::size_t>(samples.rows());
  if (n < 1 || samples.cols() < 1) throw ValidationError("construct_depth_k needs n >= 1 and d >= 1");
  if (static_cast<std::size_t>(y.size()) != n) throw ValidationError("construct_depth_k: y length must equal sample count");
  if (k < 2 || k > n + 1) {
    throw ValidationError("depth k=" + std::to_string(k) + " outside [2, n+1] for n=" + std::to_string(n));
  }
  require_distinct_rows(samples);

  const Projection p = project_distinct(samples, seed, options);
  LayeredInterpolator net;
  net.depth = k;
  net.a = p.a;
  net.sort_order = p.rank_of;
  net.shift = p.sorted(0);
  net.scale = n > 1 ? p.sorted(static_cast<Eigen::Index>(n - 1)) - p.sorted(0) : 1.0;

  Vector t = (p.sorted.array() - net.shift) / net.scale;
  t(0) = 0.0;  // exact, so the carried relu(t) is the identity on the sample
  Vector y_sorted(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) y_sorted(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(p.by_rank[r]));

  // Balanced split: sizes differ by at most one, so every block is nonempty.
  const std::size_t blocks = k - 1;
  std::size_t first = 0;
  for (std::size_t j = 0; j < blocks; ++j) {
    const std::size_t count = n / blocks + (j < n % blocks ? 1 : 0);
    InterpolatorBlock blk;
    blk.first = first;
    blk.count = count;
    const Vector tj = t.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    const Vector yj = y_sorted.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    // Offset 1 in projection units keeps k = 2 identical to construct_depth2.
    blk.b = interleaving_breakpoints(tj, 1.0 / net.scale);
    blk.w = interleaved_weights(tj, blk.b, yj);

    TrapezoidGate gate;
    gate.rise1 = tj(0);
    gate.fall0 = tj(tj.size() - 1);
    gate.rise0 = first > 0 ? t(static_cast<Eigen::Index>(first - 1)) : gate.rise1 - 1.0;
    gate.fall1 = first + count < n ? t(static_cast<Eigen::Index>(first + count)) : gate.fall0 + 1.0;
    net.blocks.push_back(std::move(blk));
    net.gates.push_back(gate);
    first += count;
  }

  double max_abs = 0.0;
  for (const auto& blk : net.blocks) {
    for (Eigen::Index i = 0; i < t.size(); ++i) max_abs = std::max(max_abs, std::abs(eval_block(blk, t(i))));
  }
  net.bound_m = max_abs + 2.0;
  for (const auto& blk : net.blocks) {
    if (!blk.w.allFinite()) throw NumericError("construct_depth_k: non-finite block weights");
  }
  return net;
}

std::vector<std::size_t> LayeredInterpolator::layer_widths() const {
  const std::size_t nb = blocks.size();
  std::vector<std::size_t> widths;
  // Layer 1: carried t (when more blocks follow), block 1, gate 1.
  widths.push_back((nb > 1 ? 1 : 0) + blocks[0].count + 4);
  for (std::size_t j = 1; j < nb; ++j) {
    // t (if needed later), block j, gate j, clamp pair for block j-1, accumulators.
    widths.push_back((j + 1 < nb ? 1 : 0) + blocks[j].count + 4 + 2 + (j >= 2 ? 2 : 0));
  }
  widths.push_back(2 + (nb >= 2 ? 2 : 0));
  return widths;
}

std::size_t LayeredInterpolator::max_width() const {
  const auto w = layer_widths();
  return *std::max_element(w.begin(), w.end());
}

std::size_t LayeredInterpolator::weight_count() const {
  std::size_t total = dim() + 2 + 1;  // a, shift, scale, M
  for (const auto& blk : blocks) total += static_cast<std::size_t>(blk.b.size() + blk.w.size());
  return total + 8 * gates.size();
}

double eval_interpolator(const LayeredInterpolator& net, const Eigen::Ref<const Vector>& x) {
  if (x.size() != net.a.size()) throw ValidationError("eval_interpolator: dimension mismatch");
  const std::size_t nb = net.blocks.size();
  const double m = net.bound_m;

  auto gate_units = [](const TrapezoidGate& g, double t) {
    return std::array<double, 4>{relu(t - g.rise0), relu(t - g.rise1), relu(t - g.fall0), relu(t - g.fall1)};
  };
  auto gate_value = [](const TrapezoidGate& g, const std::array<double, 4>& u) {
    return (u[0] - u[1]) / (g.rise1 - g.rise0) - (u[2] - u[3]) / (g.fall1 - g.fall0);
  };
  auto block_units = [](const InterpolatorBlock& blk, double t) {
    std::vector<double> u(static_cast<std::size_t>(blk.b.size()));
    for (Eigen::Index i = 0; i < blk.b.size(); ++i) u[static_cast<std::size_t>(i)] = relu(t - blk.b(i));
    return u;
  };
  auto block_value = [](const InterpolatorBlock& blk, const std::vector<double>& u) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < blk.w.size(); ++i) c += blk.w(i) * u[static_cast<std::size_t>(i)];
    return c;
  };

  // Hidden layer 1.
  const double pre_t = (net.a.dot(x) - net.shift) / net.scale;
  double carried_t = relu(pre_t);
  std::vector<double> units = block_units(net.blocks[0], pre_t);
  std::array<double, 4> gate = gate_units(net.gates[0], pre_t);
  double acc_pos = 0.0, acc_neg = 0.0;  // accumulator units (zero until layer 3)
  double clamp_p = 0.0, clamp_q = 0.0;  // clamp pair emitted by the previous layer

  // Hidden layers 2..k: each consumes the previous layer's units only.
  for (std::size_t j = 1; j <= nb; ++j) {
    const double c = block_value(net.blocks[j - 1], units);
    const double g = gate_value(net.gates[j - 1], gate);
    const double next_pos = relu(acc_pos + clamp_p);
    const double next_neg = relu(acc_neg + clamp_q);
    const double next_p = relu(c + m * g - m);
    const double next_q = relu(-c + m * g - m);
    if (j < nb) {
      units = block_units(net.blocks[j], carried_t);
      gate = gate_units(net.gates[j], carried_t);
      carried_t = relu(carried_t);
    }
    acc_pos = next_pos;
    acc_neg = next_neg;
    clamp_p = next_p;
    clamp_q = next_q;
  }
  // Output layer (linear).
  return acc_pos - acc_neg + clamp_p - clamp_q;
}

std::string LayeredInterpolator::to_json() const {
  json j;
  j["k"] = depth;
  j["d"] = dim();
  j["n"] = sort_order.size();
  j["a"] = to_vec(a);
  j["shift"] = shift;
  j["scale"] = scale;
  j["M"] = bound_m;
  j["sort_order"] = sort_order;
  j["blocks"] = json::array();
  for (const auto& blk : blocks) {
    j["blocks"].push_back({{"first", blk.first}, {"count", blk.count}, {"b", to_vec(blk.b)}, {"w", to_vec(blk.w)}});
  }
  j["gates"] = json::array();
  for (const auto& g : gates) j["gates"].push_back({g.rise0, g.rise1, g.fall0, g.fall1});
  return j.dump();
}

LayeredInterpolator LayeredInterpolator::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    LayeredInterpolator net;
    net.depth = j.at("k").get<std::size_t>();
    net.a = from_vec(j.at("a").get<std::vector<double>>());
    net.shift = j.at("shift").get<double>();
    net.scale = j.at("scale").get<double>();
    net.bound_m = j.at("M").get<double>();
    net.sort_order = j.at("sort_order").get<std::vector<std::size_t>>();
    for (const auto& jb : j.at("blocks")) {
      InterpolatorBlock blk;
      blk.first = jb.at("first").get<std::size_t>();
      blk.count = jb.at("count").get<std::size_t>();
      blk.b = from_vec(jb.at("b").get<std::vector<double>>());
      blk.w = from_vec(jb.at("w").get<std::vector<double>>());
      net.blocks.push_back(std::move(blk));
    }
    for (const auto& jg : j.at("gates")) {
      const auto v = jg.get<std::vector<double>>();
      if (v.size() != 4) throw ValidationError("gate needs 4 breakpoints");
      net.gates.push_back({v[0], v[1], v[2], v[3]});
    }
    if (net.blocks.empty() || net.blocks.size() != net.gates.size() || net.depth != net.blocks.size() + 1) {
      throw ValidationError("inconsistent layered interpolator JSON");
    }
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad layered interpolator JSON: ") + e.what());
  }
}

// -- residuals ----------------------------------------------------------------

namespace {

template <typename Net>
FitResidual residual_of(const Net& net, const Eigen::Ref<const Matrix>& samples, const Vector& y) {
  FitResidual r;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const Vector xi = samples.row(i).transpose();
    const double err = std::abs(eval_interpolator(net, xi) - y(i));
    r.max_abs = std::max(r.max_abs, err);
    r.max_rel = std::max(r.max_rel, err / (1.0 + std::abs(y(i))));
  }
  return r;
}

}  // namespace

FitResidual fit_residual(const InterpolatorNet& net, const Eigen::Ref<const Matrix>& samples,
                         const Vector& y) {
  return residual_of(net, samples, y);
}

FitResidual fit_residual(const LayeredInterpolator& net, const Eigen::Ref<const Matrix>& samples,
                         const Vector& y) {
  return residual_of(net, samples, y);
}

}  // namespace memcap

#include "memcap/kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "memcap/error.hpp"
#include "memcap/io.hpp"
#include "memcap/rng.hpp"

namespace memcap {

namespace {

constexpr std::string_view kAlphaMagic = "memcap-kernel-alpha-v1";
constexpr double kDivergenceNorm = 1e12;

Vector squared_row_norms(const Eigen::Ref<const Matrix>& X) { return X.rowwise().squaredNorm(); }

// Lower triangle of X X^T via a rank update, mirrored so the result is
// exactly symmetric.
ColMatrix symmetric_inner_products(const Eigen::Ref<const Matrix>& X) {
  const auto n = X.rows();
  ColMatrix G = ColMatrix::Zero(n, n);
  G.selfadjointView<Eigen::Lower>().rankUpdate(X);
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::Rbf && !(gamma > 0.0 && std::isfinite(gamma))) {
    throw ValidationError("RBF kernel gamma must be positive and finite");
  }
}

double median_heuristic_gamma(const Eigen::Ref<const Matrix>& X, std::size_t max_rows,
                              std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 2) throw ValidationError("median heuristic needs at least two rows");
  std::vector<std::size_t> rows;
  if (n <= max_rows) {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  } else {
    Rng rng(derive_seed(seed, "kernel.median_gamma"));
    auto perm = rng.permutation(n);
    rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(max_rows));
  }
  std::vector<double> d2;
  d2.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      d2.push_back((X.row(static_cast<Eigen::Index>(rows[i])) - X.row(static_cast<Eigen::Index>(rows[j]))).squaredNorm());
    }
  }
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  if (!(*mid > 0.0)) throw ValidationError("median pairwise distance is zero; pass gamma explicitly");
  return 1.0 / *mid;
}

ColMatrix gram(const Eigen::Ref<const Matrix>& X, const KernelSpec& spec) {
  spec.validate();
  if (X.rows() < 1) throw ValidationError("gram needs at least one row");
  ColMatrix K = symmetric_inner_products(X);
  if (spec.kind == KernelKind::Linear) return K;

  const Vector sq = K.diagonal();
  const auto n = K.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d2 = std::max(0.0, sq(i) + sq(j) - 2.0 * K(i, j));
      K(i, j) = std::exp(-spec.gamma * d2);
    }
    K(j, j) = 1.0;
  }
  K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
  return K;
}

ColMatrix cross_gram(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Matrix>& B,
                     const KernelSpec& spec) {
  spec.validate();
  if (A.cols() != B.cols()) throw ValidationError("cross_gram: feature dimensions differ");
  ColMatrix K = A * B.transpose();
  if (spec.kind == KernelKind::Linear) return K;
  const Vector sa = squared_row_norms(A);
  const Vector sb = squared_row_norms(B);
  for (Eigen::Index j = 0; j < K.cols(); ++j) {
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      K(i, j) = std::exp(-spec.gamma * std::max(0.0, sa(i) + sb(j) - 2.0 * K(i, j)));
    }
  }
  return K;
}

KernelSystem solve_interpolation(const ColMatrix& K, const ColMatrix& Y, double ridge_lambda,
                                 const SolveOptions& options) {
  const auto n = K.rows();
  if (n < 1 || K.cols() != n) throw ValidationError("Gram matrix must be square and nonempty");
  if (Y.rows() != n) throw ValidationError("target rows must match the Gram matrix");
  if (!(ridge_lambda >= 0.0)) throw ValidationError("ridge_lambda must be nonnegative");

  ColMatrix A(n, n);
  auto attempt = [&](double shift) {
    A = K;
    A.diagonal().array() += shift;
    Eigen::LLT<Eigen::Ref<ColMatrix>> llt(A);
    if (llt.info() != Eigen::Success) return std::optional<ColMatrix>{};
    ColMatrix alpha = llt.solve(Y);
    if (!alpha.allFinite()) return std::optional<ColMatrix>{};
    return std::optional<ColMatrix>{std::move(alpha)};
  };

  KernelSystem sys;
  sys.ridge_lambda = ridge_lambda;
  auto alpha = attempt(ridge_lambda);
  if (!alpha && ridge_lambda == 0.0) {
    double jitter = 1e-10 * K.trace() / static_cast<double>(n);
    for (int k = 0; k <= options.jitter_doublings && !alpha; ++k, jitter *= 2.0) {
      alpha = attempt(jitter);
      if (alpha) sys.jitter_used = jitter;
    }
  }
  if (!alpha) {
    ColMatrix shifted = K;
    shifted.diagonal().array() += ridge_lambda;
    const double rcond = Eigen::LDLT<ColMatrix>(shifted).rcond();
    std::ostringstream msg;
    msg << "Cholesky factorization failed";
    if (ridge_lambda == 0.0) msg << " after " << options.jitter_doublings << " jitter doublings";
    msg << "; reciprocal condition estimate " << rcond;
    throw NumericError(msg.str());
  }
  sys.alpha = std::move(*alpha);

  ColMatrix KA = K * sys.alpha;
  const ColMatrix resid = KA + (ridge_lambda + sys.jitter_used) * sys.alpha - Y;
  sys.residual_inf = resid.cwiseAbs().maxCoeff();
  for (Eigen::Index c = 0; c < sys.alpha.cols(); ++c) {
    sys.rkhs_norm.push_back(std::sqrt(std::max(0.0, sys.alpha.col(c).dot(KA.col(c)))));
  }
  return sys;
}

KernelSystem solve_interpolation(const ColMatrix& K, const Vector& y, double ridge_lambda,
                                 const SolveOptions& options) {
  return solve_interpolation(K, ColMatrix(y), ridge_lambda, options);
}

void KernelSystem::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "float64 dump assumes little-endian host");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kAlphaMagic << " rows=" << alpha.rows() << " cols=" << alpha.cols()
      << " lambda=" << io::format_double(ridge_lambda) << " jitter=" << io::format_double(jitter_used)
      << '\n';
  out.write(reinterpret_cast<const char*>(alpha.data()),
            static_cast<std::streamsize>(alpha.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

KernelSystem KernelSystem::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, rows_f, cols_f, lambda_f, jitter_f;
  hs >> magic >> rows_f >> cols_f >> lambda_f >> jitter_f;
  if (magic != kAlphaMagic || rows_f.rfind("rows=", 0) != 0 || cols_f.rfind("cols=", 0) != 0 ||
      lambda_f.rfind("lambda=", 0) != 0 || jitter_f.rfind("jitter=", 0) != 0) {
    throw ValidationError("not a memcap kernel-system file: " + path.string());
  }
  KernelSystem sys;
  const auto rows = std::stoll(rows_f.substr(5));
  const auto cols = std::stoll(cols_f.substr(5));
  sys.ridge_lambda = std::stod(lambda_f.substr(7));
  sys.jitter_used = std::stod(jitter_f.substr(7));
  sys.alpha.resize(rows, cols);
  in.read(reinterpret_cast<char*>(sys.alpha.data()),
          static_cast<std::streamsize>(sys.alpha.size() * sizeof(double)));
  if (!in) throw ValidationError("truncated kernel-system file " + path.string());
  return sys;
}

ColMatrix predict(const KernelSystem& system, const Eigen::Ref<const Matrix>& X_train,
                  const KernelSpec& spec, const Eigen::Ref<const Matrix>& X_new) {
  if (system.alpha.rows() != X_train.rows()) throw ValidationError("alpha rows must match training rows");
  return cross_gram(X_new, X_train, spec) * system.alpha;
}

ColMatrix one_hot(std::span<const int> labels, int num_classes) {
  ColMatrix Y = ColMatrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ValidationError("label outside [0, K)");
    Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return Y;
}

std::vector<int> argmax_rows(const ColMatrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double classification_error(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ValidationError("classification_error: size mismatch");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

MinNormSolution min_norm_linear(const Eigen::Ref<const Matrix>& X, const Vector& y) {
  const auto n = X.rows();
  if (n < 1) throw ValidationError("min_norm_linear needs at least one row");
  if (y.size() != n) throw ValidationError("min_norm_linear: y length must equal row count");
  if (n > X.cols()) throw ValidationError("min_norm_linear needs n <= d for exact interpolation");
  const ColMatrix G = symmetric_inner_products(X);
  Eigen::LLT<ColMatrix> llt(G);
  const double floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                       G.diagonal().maxCoeff();
  const Vector pivots = llt.matrixL().toDenseMatrix().diagonal().array().square();
  if (llt.info() != Eigen::Success || !(pivots.minCoeff() > floor)) {
    throw ValidationError("rows of X are linearly dependent (X X^T is singular)");
  }
  MinNormSolution sol;
  sol.alpha = llt.solve(y);
  sol.w = X.transpose() * sol.alpha;
  sol.norm = sol.w.norm();
  return sol;
}

StepSchedule constant_step(double eta) {
  return [eta](std::size_t) { return eta; };
}

StepSchedule inverse_time_step(double eta0, double decay_steps) {
  return [eta0, decay_steps](std::size_t t) {
    return eta0 / (1.0 + static_cast<double>(t) / decay_steps);
  };
}

ColMatrix row_space_basis(const Eigen::Ref<const Matrix>& X) {
  const ColMatrix Xt = X.transpose();
  Eigen::ColPivHouseholderQR<ColMatrix> qr(Xt);
  const auto rank = qr.rank();
  ColMatrix Q = qr.householderQ() * ColMatrix::Identity(Xt.rows(), rank);
  return Q;
}

std::string LinearTrace::to_csv() const {
  std::ostringstream os;
  os << "step,span_residual,dist_to_min_norm\n";
  for (const auto& s : snapshots) {
    os << s.step << ',' << io::format_double(s.span_residual) << ','
       << io::format_double(s.dist_to_min_norm) << '\n';
  }
  return os.str();
}

LinearTrace sgd_linear_train(const Eigen::Ref<const Matrix>& X, const Vector& y,
                             const StepSchedule& schedule, const SgdLinearOptions& options) {
  const auto n = X.rows();
  if (n < 1 || y.size() != n) throw ValidationError("sgd_linear_train: X rows must match y");
  if (!schedule) throw ValidationError("sgd_linear_train: missing step schedule");

  LinearTrace trace;
  trace.min_norm_w = min_norm_linear(X, y).w;
  const ColMatrix Q = row_space_basis(X);
  Rng rng(derive_seed(options.seed, "kernel.sgd_linear"));

  Vector w = Vector::Zero(X.cols());
  auto snapshot = [&](std::size_t step, double eta) {
    LinearSnapshot s;
    s.step = step;
    s.step_size = eta;
    s.span_residual = (w - Q * (Q.transpose() * w)).norm();
    s.dist_to_min_norm = (w - trace.min_norm_w).norm();
    s.train_residual = (X * w - y).cwiseAbs().maxCoeff();
    if (options.keep_weights) s.w = w;
    trace.snapshots.push_back(std::move(s));
  };

  snapshot(0, schedule(0));
  for (std::size_t t = 0; t < options.steps; ++t) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const double eta = schedule(t);
    const double err = X.row(i).dot(w) - y(i);
    w.noalias() -= (eta * err) * X.row(i).transpose();
    if (!(w.squaredNorm() <= kDivergenceNorm * kDivergenceNorm)) {
      throw NumericError("SGD diverged at step " + std::to_string(t + 1) +
                         " (||w|| > 1e12); lower the step size");
    }
    const std::size_t done = t + 1;
    if ((options.snapshot_every > 0 && done % options.snapshot_every == 0) || done == options.steps) {
      snapshot(done, eta);
    }
  }
  trace.final_w = w;
  return trace;
}

HessianReport hessian_linear(const Eigen::Ref<const Matrix>& X, const Vector& y, LossKind loss,
                             std::span<const Vector> w_eval) {
  const auto n = X.rows();
  if (n < 1 || y.size() != n) throw ValidationError("hessian_linear: X rows must match y");
  if (w_eval.empty()) throw ValidationError("hessian_linear needs at least one evaluation point");
  if (loss != LossKind::Squared) throw ValidationError("hessian_linear supports squared loss only");

  // d^2/dz^2 (z - y)^2 = 2, whatever the prediction z = w^T x_i.
  auto curvature = [](double /*z*/, double /*target*/) { return 2.0; };

  HessianReport rep;
  bool first = true;
  for (const auto& w : w_eval) {
    if (w.size() != X.cols()) throw ValidationError("hessian_linear: w dimension mismatch");
    const Vector z = X * w;
    Vector beta(n);
    for (Eigen::Index i = 0; i < n; ++i) beta(i) = curvature(z(i), y(i));
    const Matrix scaled = beta.asDiagonal() * X;
    ColMatrix H = X.transpose() * scaled;
    H /= static_cast<double>(n);
    if (first) {
      rep.beta = beta;
      rep.H = std::move(H);
      first = false;
    } else {
      rep.max_difference = std::max(rep.max_difference, (H - rep.H).cwiseAbs().maxCoeff());
    }
  }
  Eigen::SelfAdjointEigenSolver<ColMatrix> eig(rep.H, Eigen::EigenvaluesOnly);
  rep.min_eigenvalue = eig.eigenvalues().minCoeff();
  return rep;
}

Matrix random_relu_features(const Eigen::Ref<const Matrix>& X, std::size_t m, double scale,
                            std::uint64_t seed) {
  if (m == 0) throw ValidationError("random_relu_features needs m >= 1");
  const auto d = X.cols();
  Rng rng(derive_seed(seed, "kernel.random_relu"));
  Matrix W(d, static_cast<Eigen::Index>(m));
  const double w_std = scale / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = w_std * rng.normal();
  }
  Eigen::RowVectorXd b(static_cast<Eigen::Index>(m));
  for (auto& v : b) v = scale * rng.normal();
  Matrix phi = X * W;
  phi.rowwise() += b;
  return phi.cwiseMax(0.0);
}

}  // namespace memcap

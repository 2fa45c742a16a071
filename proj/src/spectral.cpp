#include "eigenopt/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eigenopt/sr.hpp"

namespace eigenopt {

namespace {

void check_square(const Eigen::MatrixXd& m, int k) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("eigendecompose: matrix must be square");
  if (k < 0 || k > m.rows())
    throw std::invalid_argument("eigendecompose: k must lie in [0, n]");
}

Spectrum top_k_sorted(const Eigen::VectorXd& values,
                      const Eigen::MatrixXd& vectors, int k) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  Spectrum out;
  out.order = SpectrumOrder::descending;
  out.eigenvalues.resize(k);
  out.eigenvectors.resize(vectors.rows(), k);
  for (int i = 0; i < k; ++i) {
    out.eigenvalues[i] = values[idx[i]];
    Eigen::VectorXd v = vectors.col(idx[i]);
    v.normalize();
    normalize_sign(v);
    out.eigenvectors.col(i) = v;
  }
  return out;
}

Spectrum symmetric_top_k(const Eigen::MatrixXd& m, int k) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw ConvergenceError("symmetric eigensolver failed", 0);
  return top_k_sorted(solver.eigenvalues(), solver.eigenvectors(), k);
}

Spectrum general_top_k(const Eigen::MatrixXd& m, int k) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, true);
  if (solver.info() != Eigen::Success)
    throw ConvergenceError("general eigensolver failed", 0);
  const double scale = std::max(1.0, m.lpNorm<Eigen::Infinity>());
  const Eigen::VectorXcd values = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values[i].imag()) > 1e-10 * scale)
      throw std::domain_error("matrix has complex eigenvalues");
  return top_k_sorted(values.real(), vectors.real(), k);
}

bool is_symmetric(const Eigen::MatrixXd& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <=
         1e-14 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

// Dominant eigenvector of b by power iteration; returns the Rayleigh value.
double power_iterate(const Eigen::MatrixXd& b, Eigen::VectorXd& v,
                     const PowerIterationSettings& settings, int index) {
  const double scale = std::max(b.lpNorm<Eigen::Infinity>(), 1e-300);
  v.normalize();
  Eigen::VectorXd bv(v.size());
  for (int it = 0; it < settings.max_iterations; ++it) {
    bv.noalias() = b * v;
    const double mu = v.dot(bv);
    if ((bv - mu * v).lpNorm<Eigen::Infinity>() <=
        settings.tolerance * scale)
      return mu;
    const double norm = bv.norm();
    if (norm == 0.0) return 0.0;
    v = bv / norm;
  }
  throw ConvergenceError("power iteration did not converge for eigenpair " +
                             std::to_string(index),
                         index);
}

Spectrum power_deflate_top_k(const Eigen::MatrixXd& m, int k,
                             const PowerIterationSettings& settings) {
  const Eigen::Index n = m.rows();
  // Shift so that every eigenvalue has non-negative real part (Gershgorin);
  // the dominant eigenvalue by magnitude is then the largest by value, and a
  // deflated pair sits at zero, below all remaining ones.
  double shift = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double off = m.row(i).cwiseAbs().sum() - std::abs(m(i, i));
    shift = std::max(shift, off - m(i, i));
  }
  Eigen::MatrixXd b = m;
  b.diagonal().array() += shift;
  const bool symmetric = is_symmetric(m);

  Rng rng(0x5eedULL);
  Spectrum out;
  out.order = SpectrumOrder::descending;
  out.eigenvalues.resize(k);
  out.eigenvectors.resize(n, k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd v(n);
    for (Eigen::Index j = 0; j < n; ++j) v[j] = uniform01(rng) + 0.5;
    const double mu = power_iterate(b, v, settings, i);
    Eigen::VectorXd w = v;
    if (!symmetric) {
      for (Eigen::Index j = 0; j < n; ++j) w[j] = uniform01(rng) + 0.5;
      power_iterate(b.transpose(), w, settings, i);
    }
    const double wv = w.dot(v);
    if (std::abs(wv) < 1e-14)
      throw ConvergenceError("defective eigenpair " + std::to_string(i), i);
    b -= (mu / wv) * v * w.transpose();

    normalize_sign(v);
    out.eigenvalues[i] = mu - shift;
    out.eigenvectors.col(i) = v;
  }
  return out;
}

int first_significant(const Eigen::VectorXd& v) {
  const double cut = 1e-9 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > cut) return static_cast<int>(i);
  return 0;
}

int largest_component(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  v.cwiseAbs().maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<Eigenpurpose> purposes_from_symmetric(const Eigen::MatrixXd& sym,
                                                  int k, double rank_tol) {
  if (k < 0 || k > sym.rows())
    throw std::invalid_argument("extract_eigenpurposes: k exceeds dimension");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw ConvergenceError("symmetric eigensolver failed", 0);
  const Eigen::VectorXd values = solver.eigenvalues();
  const double top = values.cwiseAbs().maxCoeff();
  int rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values[i]) > rank_tol * top) ++rank;
  if (k > rank)
    throw RankError("requested " + std::to_string(k) +
                        " eigenpurposes but the effective rank is " +
                        std::to_string(rank),
                    rank);

  Spectrum spec = top_k_sorted(values, solver.eigenvectors(),
                               static_cast<int>(values.size()));
  // Ties in eigenvalue go to the vector whose dominant entry has the lower
  // index.
  std::vector<int> order(spec.size());
  std::iota(order.begin(), order.end(), 0);
  for (const auto& [begin, end] : degenerate_groups(spec.eigenvalues, 1e-12)) {
    std::stable_sort(order.begin() + begin, order.begin() + end,
                     [&](int a, int b) {
                       return largest_component(spec.vector(a)) <
                              largest_component(spec.vector(b));
                     });
  }

  std::vector<Eigenpurpose> out;
  out.reserve(2 * k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd v = spec.vector(order[i]);
    const double lambda = spec.eigenvalues[order[i]];
    out.push_back({v, i, +1, lambda});
    out.push_back({-v, i, -1, lambda});
  }
  return out;
}

}  // namespace

void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  if (v.size() == 0) return;
  const int i = first_significant(v);
  if (v[i] < 0.0) v = -v;
}

Spectrum eigendecompose(const Eigen::MatrixXd& m, int k, EigenMode mode,
                        const PowerIterationSettings& power) {
  check_square(m, k);
  switch (mode) {
    case EigenMode::symmetrize:
      return symmetric_top_k(m, k);
    case EigenMode::power_deflate:
      return power_deflate_top_k(m, k, power);
    case EigenMode::general:
      return general_top_k(m, k);
  }
  throw std::invalid_argument("unknown eigen mode");
}

double max_residual(const Eigen::MatrixXd& m, const Spectrum& spectrum) {
  double worst = 0.0;
  for (int i = 0; i < spectrum.size(); ++i) {
    const Eigen::VectorXd e = spectrum.vector(i);
    worst = std::max(worst, (m * e - spectrum.eigenvalues[i] * e)
                                .lpNorm<Eigen::Infinity>());
  }
  return worst;
}

Spectrum pvf_from_sr(const Spectrum& sr, const Eigen::VectorXd& degree_sqrt,
                     double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  if (sr.eigenvectors.rows() != degree_sqrt.size())
    throw std::invalid_argument("degree vector does not match spectrum");
  const int k = sr.size();
  Spectrum out;
  out.order = sr.order == SpectrumOrder::descending ? SpectrumOrder::ascending
                                                    : SpectrumOrder::descending;
  out.eigenvalues.resize(k);
  out.eigenvectors.resize(sr.eigenvectors.rows(), k);
  for (int i = 0; i < k; ++i) {
    const double lambda = sr.eigenvalues[i];
    if (!(lambda > 0.0))
      throw std::domain_error("SR eigenvalue " + std::to_string(i) +
                              " is not positive");
    out.eigenvalues[i] = 1.0 - (1.0 - 1.0 / lambda) / gamma;
    Eigen::VectorXd e = degree_sqrt.cwiseProduct(sr.vector(i)) / gamma;
    e.normalize();
    normalize_sign(e);
    out.eigenvectors.col(i) = e;
  }
  return out;
}

Spectrum reversed(const Spectrum& s) {
  Spectrum out;
  out.order = s.order == SpectrumOrder::descending ? SpectrumOrder::ascending
                                                   : SpectrumOrder::descending;
  out.eigenvalues = s.eigenvalues.reverse();
  out.eigenvectors = s.eigenvectors.rowwise().reverse();
  return out;
}

std::vector<Eigenpurpose> extract_eigenpurposes(const Eigen::MatrixXd& m,
                                                int k) {
  if (m.rows() != m.cols()) return extract_eigenpurposes_from_samples(m, k);
  return purposes_from_symmetric(0.5 * (m + m.transpose()), k, 1e-10);
}

std::vector<Eigenpurpose> extract_eigenpurposes_from_samples(
    const Eigen::MatrixXd& samples, int k) {
  if (k > samples.cols())
    throw std::invalid_argument("extract_eigenpurposes: k exceeds features");
  const Eigen::MatrixXd gram = samples.transpose() * samples;
  // Eigenvalues of M^T M are squared singular values; 1e-12 on them is a
  // 1e-6 cut on the singular values.
  return purposes_from_symmetric(gram, k, 1e-12);
}

std::vector<Eigenpurpose> pvf_eigenpurposes(const Eigen::MatrixXd& laplacian,
                                            int k) {
  // The smallest eigenvalues of L are the largest of 2I - L (spec(L) in [0,2]),
  // which keeps the rank check meaningful.
  Eigen::MatrixXd flipped = -laplacian;
  flipped.diagonal().array() += 2.0;
  std::vector<Eigenpurpose> out =
      purposes_from_symmetric(0.5 * (flipped + flipped.transpose()), k, 0.0);
  for (Eigenpurpose& p : out) p.eigenvalue = 2.0 - p.eigenvalue;
  return out;
}

double abs_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("subspace shapes differ");
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(a), qb(b);
  const Eigen::MatrixXd ua =
      qa.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd ub =
      qb.householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  // sin of the largest angle is the 2-norm of the part of span(a) outside
  // span(b); this stays accurate for tiny angles where acos does not.
  const Eigen::MatrixXd outside = ua - ub * (ub.transpose() * ua);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(outside);
  const double s = std::min(1.0, svd.singularValues()[0]);
  return std::asin(s);
}

std::vector<std::pair<int, int>> degenerate_groups(
    const Eigen::VectorXd& eigenvalues, double rel_tol) {
  std::vector<std::pair<int, int>> groups;
  const int n = static_cast<int>(eigenvalues.size());
  if (n == 0) return groups;
  const double tol = rel_tol * eigenvalues.cwiseAbs().maxCoeff();
  int begin = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || std::abs(eigenvalues[i] - eigenvalues[i - 1]) >= tol) {
      groups.emplace_back(begin, i);
      begin = i;
    }
  }
  return groups;
}

bool TheoremReport::passed(double eig_tol, double cos_tol,
                           double angle_tol) const {
  return max_eigenvalue_residual <= eig_tol &&
         min_simple_cosine >= 1.0 - cos_tol &&
         max_principal_angle <= angle_tol;
}

TheoremReport verify_pvf_sr_equivalence(const WeightMatrix& w, double gamma) {
  const LaplacianPair lap = normalized_laplacian(w);
  const Eigen::Index n = w.entries.rows();
  const Eigen::MatrixXd random_walk =
      w.degrees.cwiseInverse().asDiagonal() * w.entries;
  const Eigen::MatrixXd psi =
      closed_form_sr(StochasticMatrix(random_walk), gamma);

  const Spectrum sr = eigendecompose(psi, static_cast<int>(n),
                                     EigenMode::general);
  const Spectrum mapped = pvf_from_sr(sr, lap.degree_sqrt, gamma);
  const Spectrum direct = reversed(
      eigendecompose(lap.laplacian, static_cast<int>(n), EigenMode::symmetrize));

  TheoremReport report;
  report.rows.resize(n);
  for (int j = 0; j < n; ++j) {
    TheoremRow& row = report.rows[j];
    // Mapped pair j comes from descending SR rank j and lands on ascending
    // Laplacian rank j; in ascending SR order that is rank n-1-j.
    row.sr_index = static_cast<int>(n) - 1 - j;
    row.pvf_index = j;
    row.sr_eigenvalue = sr.eigenvalues[j];
    row.mapped_eigenvalue = mapped.eigenvalues[j];
    row.laplacian_eigenvalue = direct.eigenvalues[j];
    row.eigenvalue_residual =
        std::abs(mapped.eigenvalues[j] - direct.eigenvalues[j]);
    report.max_eigenvalue_residual =
        std::max(report.max_eigenvalue_residual, row.eigenvalue_residual);
    report.max_rescale_deviation =
        std::max(report.max_rescale_deviation,
                 1.0 - abs_cosine(sr.vector(j), mapped.vector(j)));
  }
  for (const auto& [begin, end] : degenerate_groups(direct.eigenvalues)) {
    const int size = end - begin;
    if (size == 1) {
      const double c = abs_cosine(mapped.vector(begin), direct.vector(begin));
      report.rows[begin].cosine = c;
      report.min_simple_cosine = std::min(report.min_simple_cosine, c);
      continue;
    }
    const double angle =
        max_principal_angle(mapped.eigenvectors.middleCols(begin, size),
                            direct.eigenvectors.middleCols(begin, size));
    report.max_principal_angle = std::max(report.max_principal_angle, angle);
    for (int j = begin; j < end; ++j) {
      report.rows[j].degenerate = true;
      report.rows[j].group_size = size;
      report.rows[j].principal_angle = angle;
      report.rows[j].cosine = std::cos(angle);
    }
  }
  return report;
}

}  // namespace eigenopt

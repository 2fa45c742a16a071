#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "eigenopt/gridworld.hpp"

namespace eigenopt {

enum class SpectrumOrder { descending, ascending };

/// Eigenvalues with unit-norm right eigenvectors stored as columns.
/// Sign convention: the first component with magnitude above 1e-9 times the
/// largest magnitude is positive.
struct Spectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  SpectrumOrder order = SpectrumOrder::descending;

  int size() const { return static_cast<int>(eigenvalues.size()); }
  Eigen::VectorXd vector(int i) const { return eigenvectors.col(i); }
};

enum class EigenMode {
  // Symmetric eigensolver applied to (M + M^T) / 2.
  symmetrize,
  // Power iteration with Hotelling deflation on M (left and right vectors
  // when M is not symmetric).
  power_deflate,
  // Dense real Schur decomposition of M; fails on complex eigenvalues.
  general,
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int index)
      : std::runtime_error(what), index_(index) {}
  // Eigenpair index whose iteration failed.
  int index() const { return index_; }

 private:
  int index_;
};

class RankError : public std::runtime_error {
 public:
  RankError(const std::string& what, int effective_rank)
      : std::runtime_error(what), effective_rank_(effective_rank) {}
  int effective_rank() const { return effective_rank_; }

 private:
  int effective_rank_;
};

struct PowerIterationSettings {
  double tolerance = 1e-10;
  int max_iterations = 100000;
};

// Top-k eigenpairs by descending real eigenvalue.
Spectrum eigendecompose(const Eigen::MatrixXd& m, int k,
                        EigenMode mode = EigenMode::symmetrize,
                        const PowerIterationSettings& power = {});

// Largest |M e - lambda e|_inf over all pairs of the spectrum.
double max_residual(const Eigen::MatrixXd& m, const Spectrum& spectrum);

void normalize_sign(Eigen::Ref<Eigen::VectorXd> v);

// Maps an SR spectrum to the normalised-Laplacian spectrum:
//   lambda_pvf = 1 - (1 - 1/lambda_sr) / gamma,  e_pvf ~ D^{1/2} e_sr / gamma.
// The order flips, so a descending SR spectrum becomes an ascending one.
Spectrum pvf_from_sr(const Spectrum& sr, const Eigen::VectorXd& degree_sqrt,
                     double gamma);

Spectrum reversed(const Spectrum& s);

struct Eigenpurpose {
  Eigen::VectorXd vector;
  int source_index = 0;  // rank in the sorted spectrum
  int sign = 1;
  double eigenvalue = 0.0;
};

// Square input: top-k eigenvectors of the symmetrised matrix. Rectangular
// input (samples x features): top-k eigenvectors of M^T M. Each direction is
// emitted twice, +v then -v.
std::vector<Eigenpurpose> extract_eigenpurposes(const Eigen::MatrixXd& m,
                                                int k);
// Always treats `samples` as a row-sample matrix, even when it is square.
std::vector<Eigenpurpose> extract_eigenpurposes_from_samples(
    const Eigen::MatrixXd& samples, int k);
// Eigenpurposes from the k smallest eigenvalues of a normalised Laplacian.
std::vector<Eigenpurpose> pvf_eigenpurposes(const Eigen::MatrixXd& laplacian,
                                            int k);

double abs_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Largest principal angle (radians) between the column spans of a and b.
double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Groups consecutive eigenvalues closer than rel_tol * max|lambda|.
// Returns [begin, end) index ranges.
std::vector<std::pair<int, int>> degenerate_groups(
    const Eigen::VectorXd& eigenvalues, double rel_tol = 1e-6);

struct TheoremRow {
  // 0-based ranks, both in ascending order; sr_index + pvf_index = n - 1.
  int sr_index = 0;
  int pvf_index = 0;
  double sr_eigenvalue = 0.0;
  double mapped_eigenvalue = 0.0;
  double laplacian_eigenvalue = 0.0;
  double eigenvalue_residual = 0.0;
  bool degenerate = false;
  int group_size = 1;
  // |cosine| for simple eigenvalues, cos(max principal angle) otherwise.
  double cosine = 1.0;
  double principal_angle = 0.0;
};

struct TheoremReport {
  std::vector<TheoremRow> rows;
  double max_eigenvalue_residual = 0.0;
  double min_simple_cosine = 1.0;
  double max_principal_angle = 0.0;
  // Direction check of the D^{1/2} rescaling: max over pairs of
  // 1 - |cos(e_sr, e_pvf)|.
  double max_rescale_deviation = 0.0;

  bool passed(double eig_tol = 1e-8, double cos_tol = 1e-8,
              double angle_tol = 1e-6) const;
};

// Builds L, T = D^{-1}W and Psi = (I - gamma T)^{-1} from the weight matrix,
// maps the SR spectrum through pvf_from_sr and compares it with a direct
// symmetric decomposition of L.
TheoremReport verify_pvf_sr_equivalence(const WeightMatrix& w, double gamma);

}  // namespace eigenopt

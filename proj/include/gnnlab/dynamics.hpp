#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gnnlab/graph.hpp"
#include "gnnlab/mat.hpp"
#include "gnnlab/models.hpp"
#include "gnnlab/prune.hpp"

namespace gnnlab {

// Row-normalized aggregation coefficients of one layer as a dense
// matrix, heads averaged. Attention rows sum to 1; for GCN models the
// result is the symmetric-normalized adjacency instead, flagged by
// is_attention = false (those rows are not stochastic).
struct EffectiveAdjacency {
  std::int64_t n = 0;
  Mat dense;
  bool is_attention = true;
};

EffectiveAdjacency effective_adjacency(const GnnModel& m, const Graph& g, const Mat& X, int layer,
                                       const PruneState* st = nullptr);

// The decayed pruning weights of one layer as a dense coefficient
// matrix: surviving edge slots carry w, diagonals carry the exempt
// self-loop weights. Once anything is pruned the rows sum to < 1 —
// this is the analysis map's aggregation, not an EffectiveAdjacency.
Mat pruned_coefficients(const Graph& g, const PruneState& st, int layer);

// One layer as a plain map on feature matrices.
using LayerMap = std::function<Mat(const Mat&)>;

// The model's own layer (attention recomputed at every input).
LayerMap make_layer_map(const Graph& g, const GnnModel& m, int layer,
                        const PruneState* st = nullptr);

// The same layer aggregated with the constant decayed weights from the
// prune state instead of recomputed attention.
Mat pruned_layer_apply(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                       const PruneState& st);
LayerMap make_pruned_layer_map(const Graph& g, const GnnModel& m, int layer,
                               const PruneState& st);

struct SpectralResult {
  double rho = 0.0;
  bool converged = false;
  int iters_used = 0;
};

// Power iteration for the dominant |eigenvalue| of a linear operator.
// Each step refines a two-dimensional Rayleigh-Ritz estimate on the
// current Krylov slice, so complex-conjugate dominant pairs (where the
// plain Rayleigh quotient oscillates forever) still settle. If the
// estimate never settles within tol, the max over a trailing window is
// reported with converged = false.
using LinOp = std::function<std::vector<double>(const std::vector<double>&)>;
SpectralResult spectral_radius(const LinOp& op, std::int64_t dim, int iters, double tol,
                               std::uint64_t seed);
SpectralResult spectral_radius_dense(const Mat& a, int iters, double tol, std::uint64_t seed);
// The layer map's Jacobian at X, probed by jacobian_vector_product.
SpectralResult spectral_radius_jacobian(const LayerMap& f, const Mat& X, int iters, double tol,
                                        std::uint64_t seed);

// Central finite-difference directional derivative J_f(X) v with step
// 1e-5 * (1 + ||X||_F) / ||v||. Captures the attention coefficients'
// own dependence on X.
Mat jacobian_vector_product(const LayerMap& f, const Mat& X, const Mat& v);

struct FixedPointResult {
  Mat x;  // last iterate
  bool converged = false;
  bool diverged = false;  // residual blew past 1e12
  int steps = 0;
  std::vector<double> residuals;  // ||X(t+1) - X(t)||_F per iteration
};

FixedPointResult iterate_to_fixed_point(const LayerMap& f, const Mat& X0, int max_iter,
                                        double tol);

// Centered second moment C = (1/n) X^T X - (1/n^2) X^T 1 1^T X.
Mat feature_covariance(const Mat& X);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
// ascending. Deterministic; sized for feature dimensions, not graphs.
std::vector<double> symmetric_eigenvalues(const Mat& a);

// Count of singular values above rank_tol * sigma_max.
int numerical_rank(const Mat& c, double rank_tol = 1e-8);

// mu(X) = ||X - (1/n) 1 1^T X||_F / max(||X||_F, 1e-30): normalized
// distance from the row-constant subspace. Zero exactly at oversmoothed
// states; scale-free.
double oversmoothing_mu(const Mat& X);

// max_{i,j} ||x_i - x_j||_2 over rows.
double pairwise_collapse(const Mat& X);

struct AnalyzeOptions {
  int power_iters = 300;
  double power_tol = 1e-9;
  int fixed_point_iters = 0;  // 0 skips the weight-tied iteration
  double fixed_point_tol = 1e-9;
  std::uint64_t seed = 1;
};

// Layer-by-layer diagnostics of a trained model on its graph, plus — when
// the stack has a width-preserving hidden layer — a weight-tied
// fixed-point iteration and Jacobian spectral radius for that layer.
struct DynamicsReport {
  std::vector<double> mu_trace;      // mu(X_t), t = 0..depth
  std::vector<int> covariance_rank;  // rank(C(X_t)), t = 0..depth
  double pairwise_collapse_final = 0.0;
  int analyzed_layer = -1;  // -1: no width-preserving hidden layer
  bool has_spectral = false;
  SpectralResult spectral;
  std::vector<double> fixed_point_residuals;
  bool fixed_point_converged = false;
};

DynamicsReport analyze_model(const Graph& g, const GnnModel& m, const PruneState* st,
                             const AnalyzeOptions& opt);

// Flat CSV: one row per layer and per fixed-point iteration, plus one
// summary row. Byte-stable for fixed inputs.
void write_dynamics_csv(const std::string& path, const DynamicsReport& rep);

}  // namespace gnnlab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnlab/dynamics.hpp"
#include "gnnlab/graph.hpp"
#include "gnnlab/models.hpp"
#include "gnnlab/prune.hpp"

namespace gnnlab {

// One property battery outcome: a stable name, a verdict, and a
// one-line numeric summary of the evidence.
struct LemmaCheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Shared construction for the fixed-point batteries: a connected ring
// graph with random chords, plus an attention model whose analyzed
// hidden layer has W rescaled so that
//   L_sigma * ||W||_2 * rho(A_eff) == target
// (attention rows are stochastic, so rho(A_eff) = 1). target < 1 makes
// the layer map a contraction; target > 1 with the rescale applied to
// the spectral radius instead makes the oversmoothed state unstable.
struct ContractionSetup {
  Graph g;
  GnnModel model;
  int layer = 1;          // width-preserving hidden layer under analysis
  double contraction = 0; // realized L * ||W||_2 * rho(A_eff)
};
ContractionSetup make_contractive_setup(std::uint64_t seed, double target = 0.75);

// Convergence to a unique fixed point: the contractive layer map,
// iterated from ten random starts, reaches states whose pairwise
// Frobenius distance is < 1e-6.
LemmaCheckResult check_fixed_point_convergence(std::uint64_t seed);

// The attractor is oversmoothed: mu(X*) < 1e-6 and the pairwise row
// distance collapses; the centered covariance has rank <= 1.
LemmaCheckResult check_oversmoothing_attractor(std::uint64_t seed);

// Linear stability: at the converged X* the Jacobian spectral radius
// is <= 1 + 1e-3; rescaling the same layer to spectral radius 3 makes
// rho(J) > 1 at the row-constant state and the iteration no longer
// converges from perturbed starts.
LemmaCheckResult check_fixed_point_stability(std::uint64_t seed);

// Pruning strictly lowers the spectral radius: on `num_graphs` random
// planted-structure graphs (20-50 nodes), train an attention model,
// converge its contractive analyzed layer, and compare the Jacobian
// spectral radius at that state before pruning and after gradual
// pruning has removed at least 5% of the layer's edge slots. Passes
// when rho_pruned < rho - 1e-4 in at least 95% of trials.
LemmaCheckResult check_pruning_spectral_decrease(int num_graphs, std::uint64_t seed);

// Rank retention: a 32-layer weight-tied stack of one hidden layer
// (width 8) on a two-community graph. Without pruning the centered
// feature covariance collapses to rank <= 2 by the last layer; with
// gradual pruning active the rank stays 8 at every layer.
LemmaCheckResult check_rank_retention(std::uint64_t seed);

// All five batteries in order. `spectral_graphs` sizes the pruning
// battery (acceptance uses 50).
std::vector<LemmaCheckResult> run_lemma_suite(std::uint64_t seed, int spectral_graphs = 50);

}  // namespace gnnlab

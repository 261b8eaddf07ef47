#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "gnnlab/dynamics.hpp"
#include "gnnlab/lemmas.hpp"

using namespace gnnlab;

TEST_CASE("contractive setup realizes its advertised bound") {
  ContractionSetup setup = make_contractive_setup(42);
  CHECK(setup.layer == 1);
  CHECK(setup.contraction > 0.0);
  CHECK(setup.contraction <= 0.9);

  // The bound is not just advertised: the induced layer map converges.
  LayerMap f = make_layer_map(setup.g, setup.model, setup.layer);
  Mat x0 = eval_layer_input(setup.g, setup.model, setup.layer);
  FixedPointResult r = iterate_to_fixed_point(f, x0, 5000, 1e-12);
  CHECK(r.converged);
}

TEST_CASE("all five batteries pass at reduced spectral scale") {
  auto results = run_lemma_suite(42, 10);
  REQUIRE(results.size() == 5);
  const char* names[5] = {"fixed_point_convergence", "oversmoothing_attractor",
                          "fixed_point_stability", "pruning_spectral_decrease",
                          "rank_retention"};
  for (int i = 0; i < 5; ++i) {
    CAPTURE(results[static_cast<std::size_t>(i)].detail);
    CHECK(results[static_cast<std::size_t>(i)].name == names[i]);
    CHECK(results[static_cast<std::size_t>(i)].pass);
    CHECK(!results[static_cast<std::size_t>(i)].detail.empty());
  }
}

TEST_CASE("rank retention battery is deterministic under a fixed seed") {
  LemmaCheckResult a = check_rank_retention(123);
  LemmaCheckResult b = check_rank_retention(123);
  CHECK(a.pass == b.pass);
  CHECK(a.detail == b.detail);

  LemmaCheckResult c = check_rank_retention(124);
  CAPTURE(c.detail);
  CHECK(c.pass);
}

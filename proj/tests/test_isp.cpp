#include <cmath>
#include <random>

#include "disp/isp.hpp"
#include "doctest.h"
#include "ref_kernels.hpp"

using namespace disp;

namespace {

Tensor image_of(std::initializer_list<double> v) {
  std::vector<double> d(v);
  return Tensor({1, 1, static_cast<int>(d.size())}, d);
}

Tensor params_of(std::initializer_list<double> v) {
  std::vector<double> d(v);
  return Tensor({static_cast<int>(d.size())}, d);
}

double ag_scalar(double x, double w, double h, double px) {
  return apply_ag(image_of({x}), params_of({w, h, px})).output[0];
}

double gm_scalar(double x, double g1, double g2, double pk) {
  return apply_gm(image_of({x}), params_of({g1, g2, pk})).output[0];
}

}  // namespace

TEST_CASE("AG is continuous at both breakpoints and pins the endpoints") {
  for (auto [w, h, px] : {std::tuple{0.3, 0.6, 0.4}, {0.7, 0.2, 0.9}, {0.5, 0.5, 0.0}}) {
    const double t1 = px * (1.0 - w), t2 = t1 + w;
    for (double t : {t1, t2}) {
      const double below = ag_scalar(std::max(0.0, t - 1e-9), w, h, px);
      const double above = ag_scalar(std::min(1.0, t + 1e-9), w, h, px);
      CHECK(std::fabs(above - below) < 1e-8);
    }
    CHECK(std::fabs(ag_scalar(0.0, w, h, px)) < 1e-9);
    CHECK(std::fabs(ag_scalar(1.0, w, h, px) - 1.0) < 1e-9);
  }
}

TEST_CASE("AG with p_h == p_w is the identity") {
  std::mt19937_64 rng(2);
  Tensor img = rand_uniform({1, 8, 8}, rng, 0.0, 1.0);
  GradRecord r = apply_ag(img, params_of({0.37, 0.37, 0.62}));
  CHECK(max_abs_diff(r.output, img) < 1e-12);
}

TEST_CASE("AG rejects out-of-domain parameters") {
  Tensor img = image_of({0.5});
  CHECK_THROWS_AS(apply_ag(img, params_of({0.0, 0.5, 0.5})), DomainError);
  CHECK_THROWS_AS(apply_ag(img, params_of({0.5, 1.0, 0.5})), DomainError);
  CHECK_THROWS_AS(apply_ag(img, params_of({0.5, 0.5, 1.5})), DomainError);
  CHECK_THROWS_AS(apply_ag(img, params_of({0.5, 0.5})), ShapeError);
}

TEST_CASE("GM fixed points: X=1 and the knee X=p_k") {
  for (auto [g1, g2, pk] : {std::tuple{2.2, 0.7, 0.4}, {0.8, 1.5, 0.25}, {4.0, 0.3, 0.9}}) {
    CHECK(std::fabs(gm_scalar(1.0, g1, g2, pk) - 1.0) < 1e-9);
    const double knee = std::pow(pk, 1.0 / g1);
    CHECK(std::fabs(gm_scalar(pk, g1, g2, pk) - knee) < 1e-9);
  }
}

TEST_CASE("GM with g1=g2=1 is the identity on [clamp,1]") {
  std::mt19937_64 rng(3);
  Tensor img = rand_uniform({1, 6, 6}, rng, 1e-5, 1.0);
  GradRecord r = apply_gm(img, params_of({1.0, 1.0, 0.5}));
  CHECK(max_abs_diff(r.output, img) < 1e-12);
}

TEST_CASE("GM clamps input and rejects a degenerate denominator") {
  // below the clamp the output is the clamped value's map and d/dX is zero
  GradRecord r = apply_gm(image_of({-0.5, 0.5}), params_of({2.0, 0.8, 0.3}));
  CHECK(r.output[0] == doctest::Approx(gm_scalar(1e-6, 2.0, 0.8, 0.3)));
  Tensor u({1, 1, 2}, {1.0, 1.0});
  auto g = r.backward(u);
  CHECK(g[0][0] == 0.0);
  CHECK(g[0][1] != 0.0);

  // 1 - (1-g2)*pk^(1/g1) == 0 at g2 = 1 - pk^(-1/g1)
  const double pk = 0.25, g1 = 2.0;
  const double bad_g2 = 1.0 - 1.0 / std::pow(pk, 1.0 / g1);
  CHECK_THROWS_AS(apply_gm(image_of({0.5}), params_of({g1, bad_g2, pk})), NumericError);
}

TEST_CASE("DN preserves constant images exactly") {
  for (double v : {0.0, 0.31, 1.0}) {
    Tensor img = Tensor::full({2, 6, 7}, v);
    GradRecord r = apply_dn(img, params_of({0.8, 1.3, 0.2}));
    CHECK(max_abs_diff(r.output, img) == 0.0);
  }
}

TEST_CASE("SN preserves constant images exactly") {
  for (double v : {0.0, 0.47, 1.0}) {
    Tensor img = Tensor::full({1, 7, 6}, v);
    GradRecord r = apply_sn(img, params_of({0.9, 1.1}));
    CHECK(max_abs_diff(r.output, img) == 0.0);
  }
}

TEST_CASE("tiny sigma collapses the Gaussian to a delta: SN becomes identity") {
  std::mt19937_64 rng(4);
  Tensor img = rand_uniform({1, 8, 8}, rng, 0.0, 1.0);
  GradRecord r = apply_sn(img, params_of({0.7, 0.02}));
  CHECK(max_abs_diff(r.output, img) < 1e-12);
}

TEST_CASE("DN with p_a=0 and SN with p_a=0 are identities") {
  std::mt19937_64 rng(5);
  Tensor img = rand_uniform({1, 8, 8}, rng, 0.0, 1.0);
  CHECK(max_abs_diff(apply_dn(img, params_of({0.0, 1.0, 0.3})).output, img) == 0.0);
  CHECK(max_abs_diff(apply_sn(img, params_of({0.0, 1.0})).output, img) == 0.0);
}

TEST_CASE("DN matches the serial bilateral reference") {
  std::mt19937_64 rng(6);
  Tensor img = rand_uniform({2, 9, 8}, rng, 0.0, 1.0);
  const double a = 0.65, ss = 1.4, si = 0.22;
  GradRecord r = apply_dn(img, params_of({a, ss, si}));
  CHECK(max_abs_diff(r.output, ref::dn(img, a, ss, si)) < 1e-12);
}

TEST_CASE("SN matches the serial Gaussian reference") {
  std::mt19937_64 rng(7);
  Tensor img = rand_uniform({1, 10, 7}, rng, 0.0, 1.0);
  const double a = 0.45, sig = 0.9;
  GradRecord r = apply_sn(img, params_of({a, sig}));
  CHECK(max_abs_diff(r.output, ref::sn(img, a, sig)) < 1e-12);
}

TEST_CASE("CS is affine and passes gradients through") {
  Tensor img = image_of({0.2, 0.8});
  GradRecord r = apply_cs(img, params_of({1.5, -0.1}));
  CHECK(r.output[0] == doctest::Approx(0.2));
  CHECK(r.output[1] == doctest::Approx(1.1));
  auto g = r.backward(Tensor({1, 1, 2}, {1.0, 2.0}));
  CHECK(g[0][1] == doctest::Approx(3.0));
  CHECK(g[1][0] == doctest::Approx(0.2 + 1.6));  // sum u*x
  CHECK(g[1][1] == doctest::Approx(3.0));        // sum u
}

// [DERIVED] frozen values, computed once with the formulas in closed form:
//   AG(0.5; w=0.2,h=0.6,px=0.5): t1=0.4, t2=0.6, mid slope 3, 0.5 in [t1,t2]
//     -> 3*(0.5-0.4) + 0.5*0.4 = 0.5
//   AG(0.9; same): outer slope 0.5 -> 0.5*0.9 + (0.6-0.2)/0.8 = 0.95
//   GM(0.5; g1=2,g2=1,pk=0.5): e = 1/g1 = 0.5 -> sqrt(0.5)
TEST_CASE("frozen scalar values") {
  CHECK(ag_scalar(0.5, 0.2, 0.6, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ag_scalar(0.9, 0.2, 0.6, 0.5) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(gm_scalar(0.5, 2.0, 1.0, 0.5) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("pipeline composition chains ops and gradients") {
  std::mt19937_64 rng(8);
  PipelineSpec spec;
  StageSpec gm;
  gm.kind = IspKind::GM;
  gm.specs = default_param_specs(IspKind::GM);
  gm.default_preact = {0, 0, 0};
  StageSpec cs;
  cs.kind = IspKind::CS;
  cs.specs = default_param_specs(IspKind::CS);
  cs.default_preact = {0, 0};
  spec.stages = {gm, cs};

  Tensor img = rand_uniform({1, 6, 6}, rng, 0.05, 0.95);
  std::vector<ParamSet> params{{IspKind::GM, {2.0, 0.8, 0.4}}, {IspKind::CS, {1.2, 0.05}}};
  GradRecord r = apply_pipeline(img, spec, params);

  Tensor mid = apply_gm(img, params_of({2.0, 0.8, 0.4})).output;
  Tensor want = apply_cs(mid, params_of({1.2, 0.05})).output;
  CHECK(max_abs_diff(r.output, want) == 0.0);

  auto g = r.backward(Tensor::full(img.shape, 1.0));
  REQUIRE(g.size() == 3);
  CHECK(g[1].extent(0) == 3);
  CHECK(g[2].extent(0) == 2);

  // mismatched parameter kinds are rejected
  std::vector<ParamSet> wrong{{IspKind::CS, {1.0, 0.0}}, {IspKind::CS, {1.0, 0.0}}};
  CHECK_THROWS_AS(apply_pipeline(img, spec, wrong), ConfigError);
}

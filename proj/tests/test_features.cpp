#include <doctest.h>

#include <random>

#include "hybmat/features.hpp"

using namespace hybmat;

namespace {

StrainState ps(double exx, double eyy, double gxy) {
  StrainState e;
  e.eps = {exx, eyy, gxy};
  return e;
}

}  // namespace

TEST_CASE("kind names round-trip and dimensions are stable") {
  const std::pair<FeatureKind, std::pair<const char*, int>> table[] = {
      {FeatureKind::RawStrain, {"RawStrain", 3}},
      {FeatureKind::Inv_I1, {"Inv_I1", 1}},
      {FeatureKind::Inv_I1I2, {"Inv_I1I2", 2}},
      {FeatureKind::Inv_J2, {"Inv_J2", 1}},
      {FeatureKind::Inv_I1J2, {"Inv_I1J2", 2}},
      {FeatureKind::HistMax_I1I2, {"HistMax_I1I2", 2}},
      {FeatureKind::Precal_PlasticStrain, {"Precal_PlasticStrain", 3}},
      {FeatureKind::Precal_StressInv, {"Precal_StressInv", 2}},
  };
  for (const auto& [kind, info] : table) {
    CHECK(to_string(kind) == info.first);
    CHECK(feature_kind_from_string(info.first) == kind);
    CHECK(feature_dim(kind) == info.second);
    FeatureExtractor fx(kind);
    CHECK((int)fx.extract(ps(0.01, 0.002, -0.004)).size() == info.second);
  }
  CHECK_THROWS_AS((void)feature_kind_from_string("bogus"), UnknownKind);
}

TEST_CASE("invariant features match the tensors module") {
  const StrainState shear = ps(0, 0, 0.2);
  FeatureExtractor fx(FeatureKind::Inv_I1I2);
  const Eigen::VectorXd phi = fx.extract(shear);
  CHECK(phi[0] == doctest::Approx(0.0));
  CHECK(phi[1] == doctest::Approx(-0.01));

  FeatureExtractor fj(FeatureKind::Inv_I1J2);
  const Eigen::VectorXd pj = fj.extract(shear);
  CHECK(pj[0] == doctest::Approx(0.0));
  CHECK(pj[1] == doctest::Approx(0.01));
}

TEST_CASE("invariant features are rotation invariant") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  for (FeatureKind kind : {FeatureKind::Inv_I1, FeatureKind::Inv_I1I2,
                           FeatureKind::Inv_J2, FeatureKind::Inv_I1J2}) {
    FeatureExtractor fx(kind);
    for (int i = 0; i < 50; ++i) {
      const StrainState e = ps(u(rng), u(rng), u(rng));
      const StrainState er = rotate_in_plane(e, ang(rng));
      CHECK((fx.extract(e) - fx.extract(er)).norm() <= 1e-12);
    }
  }
}

TEST_CASE("HistMax: equals plain invariants on monotonic paths") {
  FeatureExtractor fx(FeatureKind::HistMax_I1I2);
  FeatureExtractor plain(FeatureKind::Inv_I1I2);
  for (int i = 1; i <= 20; ++i) {
    const StrainState e = ps(0.004 * i, 0.001 * i, 0.002 * i);
    CHECK((fx.extract(e) - plain.extract(e)).norm() <= 1e-14);
    fx.commit(e);
  }
}

TEST_CASE("HistMax: freezes through unloading") {
  FeatureExtractor fx(FeatureKind::HistMax_I1I2);
  StrainState peak = ps(0.05, 0.01, 0.02);
  for (int i = 1; i <= 10; ++i) {
    StrainState e = peak;
    e.eps *= i / 10.0;
    fx.commit(e);
  }
  const Eigen::VectorXd frozen = fx.extract(peak);
  for (int i = 9; i >= 0; --i) {
    StrainState e = peak;
    e.eps *= i / 10.0;
    CHECK((fx.extract(e) - frozen).norm() <= 1e-14);
    fx.commit(e);
    CHECK((fx.extract(e) - frozen).norm() <= 1e-14);
  }
}

TEST_CASE("extract is const: no state advance without commit") {
  FeatureExtractor fx(FeatureKind::Precal_StressInv);
  const StrainState big = ps(0.06, -0.02, 0.03);
  const Eigen::VectorXd first = fx.extract(big);
  const Eigen::VectorXd second = fx.extract(big);
  CHECK((first - second).norm() == 0.0);
  CHECK(fx.precal_state().kappa == 0.0);
}

TEST_CASE("Precal stress invariants: elastic regime equals elastic stiffness") {
  ReferenceMaterial m;
  FeatureExtractor fx(FeatureKind::Precal_StressInv, m);
  const StrainState small = ps(0.002, -0.001, 0.001);  // inside yield
  const Eigen::VectorXd phi = fx.extract(small);
  const auto el = elastic_update(small, {m.E, m.nu});
  const auto inv = stress_invariants(el.sig);
  CHECK(phi[0] == doctest::Approx(inv.I1).epsilon(1e-10));
  CHECK(phi[1] == doctest::Approx(inv.J2).epsilon(1e-10));
}

TEST_CASE("Precal: idempotent commits in the elastic regime") {
  FeatureExtractor fx(FeatureKind::Precal_PlasticStrain);
  const StrainState small = ps(0.002, 0.001, 0.0);
  fx.commit(small);
  const InternalState s1 = fx.precal_state();
  fx.commit(small);
  const InternalState s2 = fx.precal_state();
  CHECK(s1.eps_p == s2.eps_p);
  CHECK(s1.kappa == s2.kappa);
  CHECK(s1.kappa == 0.0);
}

TEST_CASE("Precal: kappa non-decreasing across plastic commits") {
  FeatureExtractor fx(FeatureKind::Precal_PlasticStrain);
  double prev = 0.0;
  for (int i = 1; i <= 15; ++i) {
    const StrainState e = ps(0.005 * i, -0.002 * i, 0.003 * i);
    fx.commit(e);
    CHECK(fx.precal_state().kappa >= prev);
    prev = fx.precal_state().kappa;
  }
  CHECK(prev > 0.0);  // the ramp must actually go plastic

  // plastic strain features reflect the committed precal state
  FeatureExtractor fp(FeatureKind::Precal_PlasticStrain);
  const StrainState big = ps(0.06, -0.02, 0.03);
  const Eigen::VectorXd phi = fp.extract(big);
  ReferenceMaterial m;
  const auto upd = reference_update(big, InternalState{}, m);
  CHECK(phi[0] == doctest::Approx(upd.alpha.eps_p[0]).epsilon(1e-10));
  CHECK(phi[1] == doctest::Approx(upd.alpha.eps_p[1]).epsilon(1e-10));
  CHECK(phi[2] == doctest::Approx(upd.alpha.eps_p[3]).epsilon(1e-10));
}

TEST_CASE("reset restores the initial state") {
  FeatureExtractor fx(FeatureKind::HistMax_I1I2);
  const StrainState e = ps(0.05, 0.01, 0.02);
  fx.commit(e);
  fx.reset();
  FeatureExtractor fresh(FeatureKind::HistMax_I1I2);
  const StrainState probe = ps(0.001, 0, 0);
  CHECK((fx.extract(probe) - fresh.extract(probe)).norm() == 0.0);
}

#include <doctest.h>

#include <random>

#include "hybmat/tensors.hpp"
#include "oracles.hpp"

using namespace hybmat;

namespace {

StrainState ps(double exx, double eyy, double gxy) {
  StrainState e;
  e.eps = {exx, eyy, gxy};
  return e;
}

oracle::Mat3 to_tensor(const StrainState& e) {
  oracle::Mat3 t = oracle::Mat3::Zero();
  t(0, 0) = e.eps[0];
  t(1, 1) = e.eps[1];
  t(0, 1) = t(1, 0) = 0.5 * e.eps[2];
  t(2, 2) = e.eps_zz;
  return t;
}

}  // namespace

TEST_CASE("strain invariants: zero and hydrostatic states") {
  auto inv = strain_invariants(ps(0, 0, 0));
  CHECK(inv.I1 == 0.0);
  CHECK(inv.I2 == 0.0);
  CHECK(inv.J2 == 0.0);

  // hydrostatic: eps_xx = eps_yy = eps_zz = 1 (forced through the Voigt6 path)
  Voigt6 hyd;
  hyd << 1, 1, 1, 0, 0, 0;
  auto h = strain_invariants_voigt6(hyd);
  CHECK(h.I1 == doctest::Approx(3.0));
  CHECK(h.J2 == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("strain invariants: pure shear, plane strain") {
  // principal strains +-0.1
  auto inv = strain_invariants(ps(0, 0, 0.2));
  CHECK(inv.I1 == doctest::Approx(0.0));
  CHECK(inv.I2 == doctest::Approx(-0.01));
  CHECK(inv.J2 == doctest::Approx(0.01));
}

TEST_CASE("strain invariants agree with the eigenvalue oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int i = 0; i < 200; ++i) {
    const StrainState e = ps(u(rng), u(rng), u(rng));
    const auto ref = oracle::eigen_invariants(to_tensor(e));
    const auto got = strain_invariants(e);
    CHECK(got.I1 == doctest::Approx(ref.I1).epsilon(1e-10));
    CHECK(got.I2 == doctest::Approx(ref.I2).epsilon(1e-10));
    CHECK(got.J2 == doctest::Approx(ref.J2).epsilon(1e-10));
    CHECK(got.J2 >= -1e-15);
  }
}

TEST_CASE("stress invariants: examples and eigenvalue oracle") {
  StressState zero;
  CHECK(stress_invariants(zero).I1 == 0.0);
  CHECK(stress_invariants(zero).J2 == 0.0);

  StressState uni;
  uni.sig = {30, 0, 0};
  auto inv = stress_invariants(uni);
  CHECK(inv.I1 == doctest::Approx(30.0));
  CHECK(inv.J2 == doctest::Approx(300.0));

  StressState hyd;
  hyd.sig = {5, 5, 0};
  hyd.sig_zz = 5;
  CHECK(stress_invariants(hyd).I1 == doctest::Approx(15.0));
  CHECK(stress_invariants(hyd).J2 == doctest::Approx(0.0).epsilon(1e-14));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 200; ++i) {
    StressState s;
    s.sig = {u(rng), u(rng), u(rng)};
    s.sig_zz = u(rng);
    oracle::Mat3 t = oracle::Mat3::Zero();
    t(0, 0) = s.sig[0];
    t(1, 1) = s.sig[1];
    t(0, 1) = t(1, 0) = s.sig[2];
    t(2, 2) = s.sig_zz;
    const auto ref = oracle::eigen_invariants(t);
    const auto got = stress_invariants(s);
    CHECK(got.I1 == doctest::Approx(ref.I1).epsilon(1e-10));
    CHECK(got.J2 == doctest::Approx(ref.J2).epsilon(1e-8));
  }
}

TEST_CASE("deviatoric stress: trace removal") {
  StressState hyd;
  hyd.sig = {7, 7, 0};
  hyd.sig_zz = 7;
  CHECK(deviatoric_stress(hyd).norm() == doctest::Approx(0.0).epsilon(1e-14));

  StressState uni;
  uni.sig = {3, 0, 0};
  const Voigt6 s = deviatoric_stress(uni);
  CHECK(s[0] == doctest::Approx(2.0));
  CHECK(s[1] == doctest::Approx(-1.0));
  CHECK(s[2] == doctest::Approx(-1.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 100; ++i) {
    StressState st;
    st.sig = {u(rng), u(rng), u(rng)};
    st.sig_zz = u(rng);
    const Voigt6 d = deviatoric_stress(st);
    CHECK(std::abs(d[0] + d[1] + d[2]) <= 1e-12 * st.sig.norm() + 1e-14);
  }
}

TEST_CASE("in-plane rotation: axis swap and identity") {
  const StrainState e = ps(0.3, -0.1, 0.0);
  const StrainState same = rotate_in_plane(e, 0.0);
  CHECK(same.eps.isApprox(e.eps, 1e-14));

  const StrainState swapped = rotate_in_plane(e, M_PI_2);
  CHECK(swapped.eps[0] == doctest::Approx(-0.1));
  CHECK(swapped.eps[1] == doctest::Approx(0.3));
  CHECK(swapped.eps[2] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("rotation leaves invariants unchanged") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  for (int i = 0; i < 200; ++i) {
    const StrainState e = ps(u(rng), u(rng), u(rng));
    const auto a = strain_invariants(e);
    const auto b = strain_invariants(rotate_in_plane(e, ang(rng)));
    CHECK(std::abs(a.I1 - b.I1) <= 1e-12);
    CHECK(std::abs(a.I2 - b.I2) <= 1e-12);
    CHECK(std::abs(a.J2 - b.J2) <= 1e-12);
  }
}

TEST_CASE("rotation rejects plane stress") {
  StrainState e = ps(0.1, 0.0, 0.0);
  e.regime = Regime::PlaneStress;
  e.eps_zz = -0.03;
  CHECK_THROWS_AS((void)rotate_in_plane(e, 0.5), std::invalid_argument);
}

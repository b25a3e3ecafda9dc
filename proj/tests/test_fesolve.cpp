#include <doctest.h>

#include <filesystem>

#include "hybmat/fesolve.hpp"

using namespace hybmat;
namespace fs = std::filesystem;

namespace {

// unit square split into two triangles, left/right edge sets
Mesh unit_square() {
  Mesh m;
  m.nodes = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.node_sets["left"] = {0, 3};
  m.node_sets["right"] = {1, 2};
  m.thickness = 1.0;
  return m;
}

// wraps the reference binding and vetoes increments whose strain jump at
// element 0 exceeds a threshold, to exercise the cancellation path
class VetoBinding : public MaterialBinding {
 public:
  VetoBinding(int n, ReferenceMaterial mat, double max_jump)
      : inner_(n, mat), max_jump_(max_jump), last_committed_(n) {}
  int n_points() const override { return inner_.n_points(); }
  void begin_increment() override { inner_.begin_increment(); }
  PointResponse update(int point, const StrainState& eps) override {
    if ((eps.eps - last_committed_[point].eps).norm() > max_jump_)
      throw ReturnMapDiverged("vetoed");
    return inner_.update(point, eps);
  }
  void commit(int point, const StrainState& eps) override {
    inner_.commit(point, eps);
    last_committed_[point] = eps;
  }
  bool symmetric_tangent() const override { return false; }

 private:
  ReferenceBinding inner_;
  double max_jump_;
  std::vector<StrainState> last_committed_;
};

}  // namespace

TEST_CASE("demo mesh: desk-scale, valid, named boundaries") {
  const Mesh m = make_demo_mesh();
  CHECK(m.triangles.size() >= 300);
  CHECK(m.triangles.size() <= 600);
  CHECK(!m.node_sets.at("left").empty());
  CHECK(!m.node_sets.at("right").empty());
  validate_mesh(m);  // no orphan nodes, positive areas
  for (std::size_t e = 0; e < m.triangles.size(); ++e)
    CHECK(element_area(m, (int)e) > 0.0);
}

TEST_CASE("mesh file round trip") {
  const fs::path dir = fs::temp_directory_path() / "hybmat_fe_test";
  fs::create_directories(dir);
  const std::string path = (dir / "mesh.txt").string();
  const Mesh m = make_demo_mesh(10, 6);
  save_mesh(m, path);
  const Mesh l = load_mesh(path);
  REQUIRE(l.nodes.size() == m.nodes.size());
  REQUIRE(l.triangles.size() == m.triangles.size());
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
    CHECK(l.nodes[i] == m.nodes[i]);
  CHECK(l.triangles == m.triangles);
  CHECK(l.node_sets.at("right") == m.node_sets.at("right"));
  CHECK(l.thickness == m.thickness);
  fs::remove_all(dir);

  Mesh bad = unit_square();
  bad.triangles[0] = {0, 2, 1};  // clockwise: negative area
  CHECK_THROWS_AS(validate_mesh(bad), MeshInvalid);
}

TEST_CASE("patch test: uniform extension of a two-element square") {
  const Mesh m = unit_square();
  ReferenceMaterial mat;
  mat.nu = 0.0;  // decouples the lateral direction: exact uniform strain
  ReferenceBinding binding(2, mat);
  const double u = 1e-4;  // elastic range
  const RunResult run =
      run_displacement_history(m, binding, {u}, u, SolveControls{});
  REQUIRE(run.completed);
  REQUIRE(run.records.size() == 1);
  // reaction = E * eps * area (thickness 1, edge length 1)
  CHECK(run.records[0].reaction ==
        doctest::Approx(mat.E * u).epsilon(1e-9));
}

TEST_CASE("linear problem converges in one iteration for any increment size") {
  const Mesh m = make_demo_mesh(10, 6);
  ReferenceBinding a((int)m.triangles.size(), ReferenceMaterial{});
  const double u_el = 0.001;  // fully elastic
  const RunResult one =
      run_displacement_history(m, a, {u_el}, u_el, SolveControls{});
  REQUIRE(one.completed);
  CHECK(one.records.size() == 1);

  ReferenceBinding b((int)m.triangles.size(), ReferenceMaterial{});
  const RunResult four =
      run_displacement_history(m, b, {u_el}, u_el / 4, SolveControls{});
  REQUIRE(four.completed);
  // linearity: same end reaction regardless of stepping
  CHECK(four.records.back().reaction ==
        doctest::Approx(one.records.back().reaction).epsilon(1e-9));
}

TEST_CASE("forced constitutive divergence cancels and halves the increment") {
  const Mesh m = unit_square();
  const double u = 4e-4;
  // veto any strain jump above ~u/2: the nominal full-size increment fails
  VetoBinding binding(2, ReferenceMaterial{}, 2.6e-4);
  const RunResult run =
      run_displacement_history(m, binding, {u}, u, SolveControls{});
  REQUIRE(run.completed);
  CHECK(run.records.back().cancelled >= 1);
  CHECK(run.records.size() >= 2);
  CHECK(run.records.back().u_applied == doctest::Approx(u));
}

TEST_CASE("reference self-convergence: halved step changes the curve < 1% RMS") {
  const Mesh m = make_demo_mesh(16, 8);
  const double U = 0.6;
  const int n = (int)m.triangles.size();
  ReferenceBinding coarse(n, ReferenceMaterial{});
  ReferenceBinding fine(n, ReferenceMaterial{});
  const RunResult rc =
      run_displacement_history(m, coarse, {U}, U / 10, SolveControls{});
  const RunResult rf =
      run_displacement_history(m, fine, {U}, U / 20, SolveControls{});
  REQUIRE(rc.completed);
  REQUIRE(rf.completed);

  double num = 0.0, den = 0.0;
  int matched = 0;
  for (const auto& a : rc.records)
    for (const auto& b : rf.records)
      if (std::abs(a.u_applied - b.u_applied) < 1e-9) {
        num += std::pow(a.reaction - b.reaction, 2);
        den += std::pow(b.reaction, 2);
        ++matched;
      }
  REQUIRE(matched >= 5);
  CHECK(std::sqrt(num / den) < 0.01);
}

TEST_CASE("surrogate wrapper: constant elastic parameters match the direct solve") {
  const Mesh m = make_demo_mesh(10, 6);
  const int n = (int)m.triangles.size();

  // dataset only supplies standardization constants
  PathDataset ds;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2; ++i) {
    ds.paths.push_back(generate_path(PathKind::Monotonic, sample_direction(rng),
                                     Regime::PlaneStrain, ReferenceMaterial{},
                                     PathControl{}, rng));
    ds.train_idx.push_back(i);
  }
  TrainConfig cfg;
  cfg.hidden = {8};
  cfg.seed = 2;
  HybridSurrogate s = make_surrogate(DecoderKind::Elastic, FeatureKind::Inv_I1I2,
                                     ds, ds.train_idx, cfg);
  s.net.w.setZero();
  // output biases put (E, nu) exactly at the reference values
  const long off = s.net.w.size() - 2;
  const Eigen::Vector2d target{3760.0, 0.3};
  for (int i = 0; i < 2; ++i) {
    const double f = (target[i] - s.net.bounds.low[i]) /
                     (s.net.bounds.upp[i] - s.net.bounds.low[i]);
    s.net.w[off + i] = std::log(f / (1.0 - f));
  }

  const double u = 0.002;
  SurrogateBinding sb(n, s);
  const RunResult rs = run_displacement_history(m, sb, {u}, u / 2, SolveControls{});
  ReferenceBinding rb(n, ReferenceMaterial{});
  const RunResult rr = run_displacement_history(m, rb, {u}, u / 2, SolveControls{});
  REQUIRE(rs.completed);
  REQUIRE(rr.completed);
  CHECK(rs.records.back().reaction ==
        doctest::Approx(rr.records.back().reaction).epsilon(1e-6));
  CHECK(sb.unstable_total() == 0);  // elastic model never flags instability
}

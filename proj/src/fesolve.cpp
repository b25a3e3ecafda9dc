#include "hybmat/fesolve.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hybmat {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct ElementGeom {
  Eigen::Matrix<double, 3, 6> B;
  double area;
};

ElementGeom element_geom(const Mesh& mesh, int elem) {
  const auto& t = mesh.triangles[elem];
  const auto& p1 = mesh.nodes[t[0]];
  const auto& p2 = mesh.nodes[t[1]];
  const auto& p3 = mesh.nodes[t[2]];
  const double two_a = (p2.x() - p1.x()) * (p3.y() - p1.y()) -
                       (p3.x() - p1.x()) * (p2.y() - p1.y());
  if (two_a <= 0.0)
    throw MeshInvalid("element " + std::to_string(elem) +
                      " has non-positive area");
  const double b[3] = {p2.y() - p3.y(), p3.y() - p1.y(), p1.y() - p2.y()};
  const double c[3] = {p3.x() - p2.x(), p1.x() - p3.x(), p2.x() - p1.x()};
  ElementGeom g;
  g.area = 0.5 * two_a;
  g.B.setZero();
  for (int i = 0; i < 3; ++i) {
    g.B(0, 2 * i) = b[i] / two_a;
    g.B(1, 2 * i + 1) = c[i] / two_a;
    g.B(2, 2 * i) = c[i] / two_a;
    g.B(2, 2 * i + 1) = b[i] / two_a;
  }
  return g;
}

Eigen::Matrix<double, 6, 1> gather(const Eigen::VectorXd& u,
                                   const std::array<int, 3>& t) {
  Eigen::Matrix<double, 6, 1> ue;
  for (int i = 0; i < 3; ++i) {
    ue[2 * i] = u[2 * t[i]];
    ue[2 * i + 1] = u[2 * t[i] + 1];
  }
  return ue;
}

StrainState element_strain(const ElementGeom& g, const Eigen::Matrix<double, 6, 1>& ue) {
  StrainState e;
  e.eps = g.B * ue;
  e.regime = Regime::PlaneStrain;
  return e;
}

// strain increment retried in k equal substeps when the return map diverges
template <class Update>
UpdateResult substepped_update(const Update& upd, const StrainState& eps_old,
                               const StrainState& eps_new,
                               const InternalState& alpha0) {
  try {
    return upd(eps_new, alpha0);
  } catch (const ReturnMapDiverged&) {
  }
  for (int k = 2; k <= 64; k *= 2) {
    try {
      InternalState alpha = alpha0;
      UpdateResult r;
      for (int i = 1; i <= k; ++i) {
        StrainState e = eps_new;
        e.eps = eps_old.eps + (double)i / k * (eps_new.eps - eps_old.eps);
        r = upd(e, alpha);
        alpha = r.alpha;
      }
      return r;
    } catch (const ReturnMapDiverged&) {
    }
  }
  throw ReturnMapDiverged("constitutive substepping exhausted (k = 64)");
}

std::string sanitize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  std::string s(buf);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace

double element_area(const Mesh& mesh, int elem) {
  return element_geom(mesh, elem).area;
}

void validate_mesh(const Mesh& mesh) {
  if (mesh.thickness <= 0.0) throw MeshInvalid("non-positive thickness");
  std::vector<char> used(mesh.nodes.size(), 0);
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
    for (int n : mesh.triangles[e]) {
      if (n < 0 || n >= (int)mesh.nodes.size())
        throw MeshInvalid("triangle " + std::to_string(e) +
                          " references node " + std::to_string(n));
      used[n] = 1;
    }
    element_geom(mesh, (int)e);  // throws on non-positive area
  }
  for (std::size_t n = 0; n < used.size(); ++n)
    if (!used[n]) throw MeshInvalid("orphan node " + std::to_string(n));
  for (const auto& [name, ids] : mesh.node_sets)
    for (int n : ids)
      if (n < 0 || n >= (int)mesh.nodes.size())
        throw MeshInvalid("node set " + name + " references node " +
                          std::to_string(n));
}

Mesh make_demo_mesh(int nx, int ny) {
  const double length = 20.0;
  const double half_h0 = 4.0;
  const double taper = 0.3;  // right edge is 70% of the left height
  Mesh mesh;
  mesh.thickness = 1.0;

  // structured grid on the tapered strip
  std::vector<int> node_id((nx + 1) * (ny + 1), -1);
  const auto grid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const double x = length * i / nx;
      const double h = half_h0 * (1.0 - taper * x / length);
      const double y = (2.0 * j / ny - 1.0) * h;
      node_id[grid(i, j)] = (int)mesh.nodes.size();
      mesh.nodes.push_back({x, y});
    }

  const Eigen::Vector2d holes[2] = {{0.35 * length, 0.0}, {0.65 * length, 0.0}};
  const double hole_r = 1.3;
  const auto keep = [&](const Eigen::Vector2d& c) {
    for (const auto& h : holes)
      if ((c - h).norm() < hole_r) return false;
    return true;
  };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = node_id[grid(i, j)], b = node_id[grid(i + 1, j)];
      const int c = node_id[grid(i + 1, j + 1)], d = node_id[grid(i, j + 1)];
      for (const auto& tri :
           {std::array<int, 3>{a, b, c}, std::array<int, 3>{a, c, d}}) {
        const Eigen::Vector2d centroid =
            (mesh.nodes[tri[0]] + mesh.nodes[tri[1]] + mesh.nodes[tri[2]]) / 3.0;
        if (keep(centroid)) mesh.triangles.push_back(tri);
      }
    }

  // drop nodes orphaned by hole removal and renumber
  std::vector<int> remap(mesh.nodes.size(), -1);
  std::vector<Eigen::Vector2d> kept;
  for (const auto& tri : mesh.triangles)
    for (int n : tri)
      if (remap[n] < 0) {
        remap[n] = (int)kept.size();
        kept.push_back(mesh.nodes[n]);
      }
  for (auto& tri : mesh.triangles)
    for (int& n : tri) n = remap[n];
  mesh.nodes = std::move(kept);

  const double tol = 1e-9 * length;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    if (mesh.nodes[n].x() < tol) mesh.node_sets["left"].push_back((int)n);
    if (mesh.nodes[n].x() > length - tol)
      mesh.node_sets["right"].push_back((int)n);
  }
  validate_mesh(mesh);
  return mesh;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "thickness %.17g\n", mesh.thickness);
  out << buf;
  out << "nodes " << mesh.nodes.size() << "\n";
  for (const auto& n : mesh.nodes) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", n.x(), n.y());
    out << buf;
  }
  out << "triangles " << mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles)
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (const auto& [name, ids] : mesh.node_sets) {
    out << "nodeset " << name << " " << ids.size() << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      out << ids[i] << (i + 1 == ids.size() ? "\n" : " ");
  }
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  // strip comments, then tokenize
  std::stringstream tokens;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    tokens << line << "\n";
  }

  Mesh mesh;
  std::string word;
  while (tokens >> word) {
    if (word == "thickness") {
      tokens >> mesh.thickness;
    } else if (word == "nodes") {
      std::size_t n;
      tokens >> n;
      mesh.nodes.resize(n);
      for (auto& p : mesh.nodes) tokens >> p.x() >> p.y();
    } else if (word == "triangles") {
      std::size_t n;
      tokens >> n;
      mesh.triangles.resize(n);
      for (auto& t : mesh.triangles) tokens >> t[0] >> t[1] >> t[2];
    } else if (word == "nodeset") {
      std::string name;
      std::size_t n;
      tokens >> name >> n;
      auto& ids = mesh.node_sets[name];
      ids.resize(n);
      for (auto& id : ids) tokens >> id;
    } else {
      throw MeshInvalid("unexpected token '" + word + "' in " + path);
    }
    if (!tokens) throw MeshInvalid("truncated mesh file " + path);
  }
  validate_mesh(mesh);
  return mesh;
}

ReferenceBinding::ReferenceBinding(int n_points, ReferenceMaterial material)
    : material_(material), committed_(n_points), eps_old_(n_points) {}

PointResponse ReferenceBinding::update(int point, const StrainState& eps) {
  const auto r = substepped_update(
      [&](const StrainState& e, const InternalState& a) {
        return reference_update(e, a, material_);
      },
      eps_old_[point], eps, committed_[point]);
  return {r.sig, r.D};
}

void ReferenceBinding::commit(int point, const StrainState& eps) {
  const auto r = substepped_update(
      [&](const StrainState& e, const InternalState& a) {
        return reference_update(e, a, material_);
      },
      eps_old_[point], eps, committed_[point]);
  committed_[point] = r.alpha;
  eps_old_[point] = eps;
}

SurrogateBinding::SurrogateBinding(int n_points, HybridSurrogate& surrogate,
                                   StabilizeConfig stab, std::uint64_t seed)
    : surrogate_(surrogate), stab_(stab), rng_(seed) {
  points_.reserve(n_points);
  StrainState zero;
  Point proto{zero, InternalState{}, surrogate.make_extractor(),
              Eigen::VectorXd{}, 1.0};
  proto.theta = predict_theta(surrogate_, proto.features.extract(zero));
  const auto elastic = decode(surrogate_, proto.theta, zero, proto.alpha);
  proto.detQ0 = acoustic_det_min(elastic.D, stab_.refine).detQ;
  if (!(proto.detQ0 > 0.0))
    throw NonpositiveReference("surrogate elastic reference state unstable");
  for (int i = 0; i < n_points; ++i) points_.push_back(proto);
}

void SurrogateBinding::set_retrain_data(const PathDataset* ds,
                                        std::vector<int> train_idx,
                                        std::vector<int> val_idx) {
  retrain_ds_ = ds;
  retrain_idx_ = std::move(train_idx);
  val_idx_ = std::move(val_idx);
}

void SurrogateBinding::run_stability_check() {
  std::vector<UnstablePoint> unstable;
  for (const auto& pt : points_) {
    const auto upd = decode(surrogate_, pt.theta, pt.eps_old, pt.alpha);
    if (acoustic_det_min(upd.D, stab_.refine).detQ < 0.0)
      unstable.push_back({pt.eps_old, pt.alpha, pt.features, pt.detQ0});
  }
  unstable_total_ += (long)unstable.size();
  if (unstable.empty()) return;

  static const PathDataset kEmpty;
  const PathDataset& ds = retrain_ds_ ? *retrain_ds_ : kEmpty;
  stab_log_.push_back(stabilize_network(surrogate_, unstable, ds, retrain_idx_,
                                        val_idx_, stab_, rng_));
  // parameters for the current step from the updated encoder
  for (auto& pt : points_)
    pt.theta = predict_theta(surrogate_, pt.features.extract(pt.eps_old));
}

PointResponse SurrogateBinding::update(int point, const StrainState& eps) {
  if (first_iteration_) {
    first_iteration_ = false;
    if (check_stability_) run_stability_check();
  }
  Point& pt = points_[point];
  const auto r = substepped_update(
      [&](const StrainState& e, const InternalState& a) {
        return decode(surrogate_, pt.theta, e, a);
      },
      pt.eps_old, eps, pt.alpha);
  return {r.sig, r.D};
}

void SurrogateBinding::commit(int point, const StrainState& eps) {
  Point& pt = points_[point];
  const auto r = substepped_update(
      [&](const StrainState& e, const InternalState& a) {
        return decode(surrogate_, pt.theta, e, a);
      },
      pt.eps_old, eps, pt.alpha);
  pt.alpha = r.alpha;
  pt.eps_old = eps;
  pt.features.commit(eps);
  pt.theta = predict_theta(surrogate_, pt.features.extract(eps));
}

namespace {

struct DofMap {
  std::vector<int> free_index;  // dof -> compact free index, -1 if prescribed
  std::vector<int> free_dofs;
  std::vector<int> load_x_dofs;  // prescribed x dofs on the loaded edge
};

DofMap build_dof_map(const Mesh& mesh, const SolveControls& controls) {
  const auto fixed = mesh.node_sets.find(controls.fixed_set);
  const auto load = mesh.node_sets.find(controls.load_set);
  if (fixed == mesh.node_sets.end() || load == mesh.node_sets.end())
    throw StepFailed("missing node set '" + controls.fixed_set + "' or '" +
                     controls.load_set + "'");

  const int n_dofs = 2 * (int)mesh.nodes.size();
  std::vector<char> prescribed(n_dofs, 0);
  for (int n : fixed->second) prescribed[2 * n] = prescribed[2 * n + 1] = 1;
  DofMap map;
  for (int n : load->second) {
    prescribed[2 * n] = 1;
    map.load_x_dofs.push_back(2 * n);
  }
  map.free_index.assign(n_dofs, -1);
  for (int d = 0; d < n_dofs; ++d)
    if (!prescribed[d]) {
      map.free_index[d] = (int)map.free_dofs.size();
      map.free_dofs.push_back(d);
    }
  return map;
}

// internal force and free-free tangent block at the current iterate
void assemble(const Mesh& mesh, const std::vector<ElementGeom>& geoms,
              MaterialBinding& binding, const Eigen::VectorXd& u,
              const DofMap& map, Eigen::VectorXd& f_int, SpMat& K) {
  f_int.setZero();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(36 * mesh.triangles.size());
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
    const auto& t = mesh.triangles[e];
    const auto& g = geoms[e];
    const StrainState eps = element_strain(g, gather(u, t));
    PointResponse resp;
    try {
      resp = binding.update((int)e, eps);
    } catch (const ReturnMapDiverged& ex) {
      throw ReturnMapDiverged("element " + std::to_string(e) + ": " + ex.what());
    }
    const double w = mesh.thickness * g.area;
    const Eigen::Matrix<double, 6, 1> fe = w * g.B.transpose() * resp.sig.sig;
    const Eigen::Matrix<double, 6, 6> ke = w * g.B.transpose() * resp.D * g.B;
    int dofs[6];
    for (int i = 0; i < 3; ++i) {
      dofs[2 * i] = 2 * t[i];
      dofs[2 * i + 1] = 2 * t[i] + 1;
    }
    for (int i = 0; i < 6; ++i) {
      f_int[dofs[i]] += fe[i];
      const int fi = map.free_index[dofs[i]];
      if (fi < 0) continue;
      for (int j = 0; j < 6; ++j) {
        const int fj = map.free_index[dofs[j]];
        if (fj >= 0) trips.emplace_back(fi, fj, ke(i, j));
      }
    }
  }
  K.setFromTriplets(trips.begin(), trips.end());
}

}  // namespace

RunResult run_displacement_history(const Mesh& mesh, MaterialBinding& binding,
                                   const std::vector<double>& targets,
                                   double du, const SolveControls& controls) {
  validate_mesh(mesh);
  if ((int)mesh.triangles.size() != binding.n_points())
    throw StepFailed("binding point count does not match mesh");
  if (!(du > 0.0)) throw StepFailed("nominal increment must be positive");

  std::vector<ElementGeom> geoms;
  geoms.reserve(mesh.triangles.size());
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e)
    geoms.push_back(element_geom(mesh, (int)e));
  const DofMap map = build_dof_map(mesh, controls);
  const int n_free = (int)map.free_dofs.size();

  Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * mesh.nodes.size());
  Eigen::VectorXd f_int(u.size());
  SpMat K(n_free, n_free);

  RunResult result;
  double u_applied = 0.0;
  double du_cur = du;
  int step = 0, cancelled = 0;
  const auto t0 = std::chrono::steady_clock::now();

  const auto attempt = [&](double u_target, Eigen::VectorXd& u_trial) -> bool {
    u_trial = u;
    for (int d : map.load_x_dofs) u_trial[d] = u_target;
    binding.begin_increment();
    for (int it = 0;; ++it) {
      try {
        assemble(mesh, geoms, binding, u_trial, map, f_int, K);
      } catch (const ReturnMapDiverged&) {
        return false;
      }
      double res = 0.0;
      for (int d : map.free_dofs) res += f_int[d] * f_int[d];
      res = std::sqrt(res);
      double reaction = 0.0;
      for (int d : map.load_x_dofs) reaction += std::abs(f_int[d]);
      const double tol = controls.rel_tol * std::max(reaction, 1e-12);
      if (it > 0 && res <= tol) return true;
      if (it >= controls.max_iterations) return false;

      Eigen::VectorXd rhs(n_free);
      for (int i = 0; i < n_free; ++i) rhs[i] = -f_int[map.free_dofs[i]];
      Eigen::SparseLU<SpMat> lu(K);
      if (lu.info() != Eigen::Success) return false;
      const Eigen::VectorXd delta = lu.solve(rhs);
      if (!delta.allFinite()) return false;
      for (int i = 0; i < n_free; ++i) u_trial[map.free_dofs[i]] += delta[i];
    }
  };

  for (double target : targets) {
    while (std::abs(target - u_applied) > 1e-12) {
      const double dir = target > u_applied ? 1.0 : -1.0;
      const double step_du = std::min(du_cur, std::abs(target - u_applied));
      const double u_try = u_applied + dir * step_du;

      Eigen::VectorXd u_trial;
      if (attempt(u_try, u_trial)) {
        u = u_trial;
        u_applied = u_try;
        for (std::size_t e = 0; e < mesh.triangles.size(); ++e)
          binding.commit((int)e,
                         element_strain(geoms[e], gather(u, mesh.triangles[e])));
        double reaction = 0.0;
        for (int d : map.load_x_dofs) reaction += f_int[d];
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.records.push_back({++step, u_applied, reaction, secs,
                                  binding.unstable_total(), cancelled});
        du_cur = std::min(du_cur * controls.growth, du);
      } else {
        ++cancelled;
        du_cur = 0.5 * step_du;
        if (cancelled > controls.max_cancelled ||
            du_cur < controls.min_du_fraction * du) {
          result.completed = false;
          result.failure = "terminated after " + std::to_string(cancelled) +
                           " cancelled increments at u = " +
                           std::to_string(u_applied);
          return result;
        }
      }
    }
  }
  return result;
}

void save_curve_csv(const RunResult& run, const std::string& path,
                    const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  if (!run.completed) out << "# incomplete: " << run.failure << "\n";
  out << "step,u_applied,reaction,seconds,unstable,cancelled\n";
  char buf[160];
  for (const auto& r : run.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.6g,%ld,%d\n", r.step,
                  r.u_applied, r.reaction, r.seconds, r.unstable, r.cancelled);
    out << buf;
  }
}

void save_stabilization_csv(const std::vector<StabilizeResult>& log,
                            const std::string& path,
                            const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "event,n_unstable,neg_before,neg_after,epochs,val_loss_after\n";
  char buf[160];
  for (std::size_t i = 0; i < log.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%d,%.17g\n", i,
                  log[i].n_unstable, log[i].neg_before, log[i].neg_after,
                  log[i].epochs, log[i].val_loss_after);
    out << buf;
  }
}

std::vector<std::string> run_demo(const Mesh& mesh, HybridSurrogate* surrogate,
                                  const DemoConfig& config) {
  std::vector<std::string> written;
  const int n_pts = (int)mesh.triangles.size();
  const double du_ref = config.total_u / config.ref_steps;
  const std::vector<double> targets =
      config.unload_reload
          ? std::vector<double>{0.6 * config.total_u, 0.3 * config.total_u,
                                config.total_u}
          : std::vector<double>{config.total_u};
  const auto emit = [&](const RunResult& run, const std::string& name) {
    const std::string path = config.out_dir + "/" + name;
    save_curve_csv(run, path, config.header_comment);
    written.push_back(path);
  };

  {
    ReferenceBinding binding(n_pts, config.material);
    emit(run_displacement_history(mesh, binding, targets, du_ref,
                                  config.controls),
         "ld_reference.csv");
  }
  if (!surrogate) return written;

  const double du_sur = du_ref * config.du_factor;
  const auto surrogate_run = [&](double du, StabilizeConfig stab,
                                 std::vector<StabilizeResult>* log) {
    HybridSurrogate s = *surrogate;  // each run owns its own weights
    SurrogateBinding binding(n_pts, s, stab, config.seed);
    if (config.retrain_data)
      binding.set_retrain_data(config.retrain_data, config.retrain_idx,
                               config.val_idx);
    auto run =
        run_displacement_history(mesh, binding, targets, du, config.controls);
    if (log) *log = binding.stabilization_log();
    return run;
  };

  {
    std::vector<StabilizeResult> log;
    emit(surrogate_run(du_sur, config.stab, &log), "ld_surrogate.csv");
    const std::string path = config.out_dir + "/stab_surrogate.csv";
    save_stabilization_csv(log, path, config.header_comment);
    written.push_back(path);
  }

  for (double f : config.dt_sweep_factors) {
    emit(surrogate_run(du_sur * f, config.stab, nullptr),
         "ld_dt_" + sanitize(f) + ".csv");
  }

  for (int epochs : config.stab_epochs_sweep) {
    for (int pass = 0; pass < (config.sweep_retrain_off ? 2 : 1); ++pass) {
      StabilizeConfig stab = config.stab;
      stab.stab_epochs = epochs;
      if (pass == 1) stab.retrain_paths = 0;
      const std::string tag =
          "stab_" + std::to_string(epochs) + (pass == 1 ? "_noretrain" : "");
      std::vector<StabilizeResult> log;
      emit(surrogate_run(du_sur, stab, &log), "ld_" + tag + ".csv");
      const std::string path = config.out_dir + "/log_" + tag + ".csv";
      save_stabilization_csv(log, path, config.header_comment);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace hybmat

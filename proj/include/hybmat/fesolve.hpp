// Minimal 2D nonlinear FE solver: linear (constant-strain) triangles with
// one integration point each, Newton-Raphson under displacement control,
// adaptive load stepping and constitutive substepping. The constitutive
// response is abstracted behind MaterialBinding so the same solver hosts
// either the reference material or the hybrid surrogate wrapper.
//
// Mesh text format (line oriented, '#' starts a comment):
//   thickness <t>
//   nodes <N>
//   <x> <y>              N lines; node ids are implicit 0..N-1
//   triangles <M>
//   <a> <b> <c>          M lines of node ids, counter-clockwise
//   nodeset <name> <K>
//   <id> <id> ...        K ids, whitespace separated, may span lines

#ifndef HYBMAT_FESOLVE_HPP
#define HYBMAT_FESOLVE_HPP

#include <array>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hybmat/hybrid.hpp"
#include "hybmat/stability.hpp"

namespace hybmat {

struct MeshInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StepFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mesh {
  std::vector<Eigen::Vector2d> nodes;  // mm
  std::vector<std::array<int, 3>> triangles;
  std::map<std::string, std::vector<int>> node_sets;
  double thickness = 1.0;  // mm
};

double element_area(const Mesh& mesh, int elem);
void validate_mesh(const Mesh& mesh);

/// Desk-scale demo geometry: a tapered strip with circular holes removed
/// from a structured triangle grid. Node sets "left" and "right" hold the
/// clamped and loaded edges.
Mesh make_demo_mesh(int nx = 24, int ny = 10);

void save_mesh(const Mesh& mesh, const std::string& path);
Mesh load_mesh(const std::string& path);

struct PointResponse {
  StressState sig;
  Tangent D = Tangent::Zero();
};

/// Per-integration-point constitutive interface. update() is called from
/// Newton iterations and must not mutate committed history; commit() is
/// called once per converged step with the converged strain.
class MaterialBinding {
 public:
  virtual ~MaterialBinding() = default;
  virtual int n_points() const = 0;
  /// Called once when a new global increment starts (before iteration 1).
  virtual void begin_increment() {}
  virtual PointResponse update(int point, const StrainState& eps) = 0;
  virtual void commit(int point, const StrainState& eps) = 0;
  virtual bool symmetric_tangent() const = 0;
  /// Unstable-point count accumulated so far (surrogate wrapper only).
  virtual long unstable_total() const { return 0; }
};

/// Reference (ground-truth) material at every point, with constitutive
/// substepping: a diverging return map retries the strain increment in
/// k equal substeps, k doubling up to 64.
class ReferenceBinding : public MaterialBinding {
 public:
  ReferenceBinding(int n_points, ReferenceMaterial material = {});
  int n_points() const override { return (int)committed_.size(); }
  PointResponse update(int point, const StrainState& eps) override;
  void commit(int point, const StrainState& eps) override;
  bool symmetric_tangent() const override { return false; }

 private:
  ReferenceMaterial material_;
  std::vector<InternalState> committed_;
  std::vector<StrainState> eps_old_;
};

/// Hybrid-surrogate wrapper implementing the online protocol: parameters
/// theta stay frozen across the Newton iterations of a step and are
/// recomputed from committed features only at convergence; at the first
/// iteration of every increment each point runs an acoustic stability
/// check and, when any det Q < 0, the encoder is stabilized once and theta
/// recomputed from the converged strains.
class SurrogateBinding : public MaterialBinding {
 public:
  SurrogateBinding(int n_points, HybridSurrogate& surrogate,
                   StabilizeConfig stab = {}, std::uint64_t seed = 0);

  /// Optional retraining data for the stabilization step.
  void set_retrain_data(const PathDataset* ds, std::vector<int> train_idx,
                        std::vector<int> val_idx);
  void set_stability_check(bool enabled) { check_stability_ = enabled; }

  int n_points() const override { return (int)points_.size(); }
  void begin_increment() override { first_iteration_ = true; }
  PointResponse update(int point, const StrainState& eps) override;
  void commit(int point, const StrainState& eps) override;
  bool symmetric_tangent() const override { return false; }
  long unstable_total() const override { return unstable_total_; }

  const std::vector<StabilizeResult>& stabilization_log() const {
    return stab_log_;
  }

 private:
  struct Point {
    StrainState eps_old;
    InternalState alpha;
    FeatureExtractor features;
    Eigen::VectorXd theta;
    double detQ0 = 1.0;
  };

  void run_stability_check();

  HybridSurrogate& surrogate_;
  std::vector<Point> points_;
  StabilizeConfig stab_;
  std::mt19937_64 rng_;
  bool first_iteration_ = true;
  bool check_stability_ = true;
  long unstable_total_ = 0;
  std::vector<StabilizeResult> stab_log_;
  const PathDataset* retrain_ds_ = nullptr;
  std::vector<int> retrain_idx_, val_idx_;
};

struct SolveControls {
  double rel_tol = 1e-6;
  int max_iterations = 25;
  double growth = 1.2;
  int max_cancelled = 100;
  double min_du_fraction = 1e-4;  // of the nominal increment
  std::string fixed_set = "left";
  std::string load_set = "right";  // prescribed x displacement, y free
};

struct StepRecord {
  int step = 0;
  double u_applied = 0.0;   // mm
  double reaction = 0.0;    // N, x-resultant on the loaded edge
  double seconds = 0.0;     // cumulative wall time
  long unstable = 0;        // cumulative unstable-point count
  int cancelled = 0;        // cumulative cancelled increments
};

struct RunResult {
  std::vector<StepRecord> records;
  bool completed = true;
  std::string failure;
};

/// Walks the applied edge displacement through the listed targets with
/// nominal increment du, adaptive halving on failed increments (Newton cap
/// or constitutive divergence) and 1.2x regrowth after successes. Throws
/// StepFailed only on a structurally invalid setup; running out of
/// cancellations ends the run with completed = false.
RunResult run_displacement_history(const Mesh& mesh, MaterialBinding& binding,
                                   const std::vector<double>& targets,
                                   double du, const SolveControls& controls);

void save_curve_csv(const RunResult& run, const std::string& path,
                    const std::string& header_comment);
void save_stabilization_csv(const std::vector<StabilizeResult>& log,
                            const std::string& path,
                            const std::string& header_comment);

struct DemoConfig {
  std::string out_dir = ".";
  std::string header_comment;
  double total_u = 0.8;  // mm of applied edge displacement
  int ref_steps = 20;
  double du_factor = 0.1;  // surrogate du = ref du * factor
  bool unload_reload = false;
  std::vector<double> dt_sweep_factors;  // relative to the surrogate du
  std::vector<int> stab_epochs_sweep;
  bool sweep_retrain_off = false;  // also run the sweep without retraining
  StabilizeConfig stab;
  std::uint64_t seed = 0;
  SolveControls controls;
  ReferenceMaterial material;
  const PathDataset* retrain_data = nullptr;
  std::vector<int> retrain_idx, val_idx;
};

/// Full demonstration: reference solve, surrogate solve at a fraction of
/// the reference increment, optional stabilization-parameter and step-size
/// sweeps. Returns the list of CSV files written.
std::vector<std::string> run_demo(const Mesh& mesh, HybridSurrogate* surrogate,
                                  const DemoConfig& config);

}  // namespace hybmat

#endif

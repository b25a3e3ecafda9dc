// Strain-path generation against the reference material, path balancing
// to a fixed number of snapshots, and dataset persistence.

#ifndef HYBMAT_PATHS_HPP
#define HYBMAT_PATHS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hybmat/materials.hpp"
#include "hybmat/tensors.hpp"

namespace hybmat {

struct GenerationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooFewIncrements : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PathKind { Monotonic, UnloadReload, SlowCycle };

std::string to_string(PathKind kind);
PathKind path_kind_from_string(const std::string& name);

struct PathStep {
  StrainState eps;
  StressState sig;
};

struct StrainPath {
  int id = 0;
  PathKind kind = PathKind::Monotonic;
  Regime regime = Regime::PlaneStrain;
  Vector3 direction = Vector3::Zero();  // unit vector in Voigt strain space
  std::vector<PathStep> steps;
  std::uint64_t seed = 0;
};

struct PathControl {
  double final_norm = 0.10;
  int balanced_steps = 30;
  double initial_step_fraction = 1.0 / 40.0;  // of branch length
  double max_step_fraction = 1.0 / 34.0;      // keeps enough raw increments
  double growth = 1.2;
  double min_step = 1e-8;
};

/// Uniform direction on the unit sphere in (eps_xx, eps_yy, gamma_xy) space.
Vector3 sample_direction(std::mt19937_64& rng);

/// Proportional path driven along `direction`; raw adaptive increments are
/// integrated through the reference material and then balanced to
/// `control.balanced_steps` snapshots. `rng` draws the kind-specific shape
/// parameters (unload fraction, cycle ratio).
StrainPath generate_path(PathKind kind, const Vector3& direction, Regime regime,
                         const ReferenceMaterial& material,
                         const PathControl& control, std::mt19937_64& rng);

/// Balances a raw proportional path to `n_steps` snapshots whose strain
/// norms sit as close as possible to equally spaced targets per monotonic
/// branch. Stresses at selected snapshots come from material integration,
/// never from interpolation.
StrainPath balance_path(const StrainPath& raw, const ReferenceMaterial& material,
                        int n_steps);

struct DatasetConfig {
  std::string out_dir = ".";
  std::uint64_t seed = 2024;
  int n_monotonic = 2000;
  int n_train = 1500;  // remainder of n_monotonic is validation
  int n_test_per_kind = 50;
  std::vector<Regime> regimes = {Regime::PlaneStrain, Regime::PlaneStress};
  ReferenceMaterial material;
  PathControl control;
};

struct PathDataset {
  std::vector<StrainPath> paths;
  Regime regime = Regime::PlaneStrain;
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  std::vector<int> test_idx;
  std::uint64_t seed = 0;
};

PathDataset build_dataset(const DatasetConfig& config, Regime regime);

/// Writes one CSV per regime plus a JSON manifest; returns written files.
std::vector<std::string> build_datasets(const DatasetConfig& config);

std::string regime_name(Regime regime);
Regime regime_from_string(const std::string& name);

void save_dataset_csv(const PathDataset& ds, const std::string& path);
PathDataset load_dataset_csv(const std::string& path);

/// Reattaches the train/val/test split recorded in a manifest.
void apply_manifest_split(PathDataset& ds, const std::string& manifest_path);

}  // namespace hybmat

#endif

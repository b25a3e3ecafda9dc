#include "hybmat/paths.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hybmat {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

StrainState make_state(const Vector3& dir, double amplitude, Regime regime) {
  StrainState e;
  e.eps = amplitude * dir;
  e.regime = regime;
  return e;
}

// Amplitude branches of the proportional load program, as (start, end).
std::vector<std::pair<double, double>> amplitude_branches(
    PathKind kind, double A, std::mt19937_64& rng) {
  switch (kind) {
    case PathKind::Monotonic:
      return {{0.0, A}};
    case PathKind::UnloadReload: {
      std::uniform_real_distribution<double> sw(0.3, 0.9);
      std::uniform_real_distribution<double> fr(0.1, 0.9);
      const double s = sw(rng) * A;  // switch point
      const double f = fr(rng) * s;  // unload target
      return {{0.0, s}, {s, f}, {f, A}};
    }
    case PathKind::SlowCycle: {
      std::uniform_real_distribution<double> rr(0.3, 1.0);
      const double r = rr(rng);
      std::vector<std::pair<double, double>> br = {{0.0, A}};
      for (int cycle = 0; cycle < 3; ++cycle) {
        br.push_back({A, -r * A});
        br.push_back({-r * A, A});
      }
      return br;
    }
  }
  throw GenerationFailed("invalid path kind");
}

}  // namespace

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::Monotonic: return "Monotonic";
    case PathKind::UnloadReload: return "UnloadReload";
    case PathKind::SlowCycle: return "SlowCycle";
  }
  throw GenerationFailed("invalid path kind");
}

PathKind path_kind_from_string(const std::string& name) {
  if (name == "Monotonic") return PathKind::Monotonic;
  if (name == "UnloadReload") return PathKind::UnloadReload;
  if (name == "SlowCycle") return PathKind::SlowCycle;
  throw GenerationFailed("unknown path kind: " + name);
}

std::string regime_name(Regime regime) {
  return regime == Regime::PlaneStrain ? "plane_strain" : "plane_stress";
}

Regime regime_from_string(const std::string& name) {
  if (name == "plane_strain") return Regime::PlaneStrain;
  if (name == "plane_stress") return Regime::PlaneStress;
  throw GenerationFailed("unknown regime: " + name);
}

Vector3 sample_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector3 d;
  do {
    d << gauss(rng), gauss(rng), gauss(rng);
  } while (d.norm() < 1e-12);
  return d / d.norm();
}

StrainPath generate_path(PathKind kind, const Vector3& direction, Regime regime,
                         const ReferenceMaterial& material,
                         const PathControl& control, std::mt19937_64& rng) {
  if (control.final_norm <= 0.0 || std::abs(direction.norm() - 1.0) > 1e-9)
    throw GenerationFailed("generate_path: degenerate request");

  const auto branches = amplitude_branches(kind, control.final_norm, rng);

  StrainPath raw;
  raw.kind = kind;
  raw.regime = regime;
  raw.direction = direction;

  InternalState alpha;
  double a = 0.0;
  for (const auto& [a0, a1] : branches) {
    const double len = std::abs(a1 - a0);
    const double sign = a1 > a0 ? 1.0 : -1.0;
    const double cap = len * control.max_step_fraction;
    double da = std::min(len * control.initial_step_fraction, cap);
    a = a0;
    while (sign * (a1 - a) > 1e-14) {
      double a_next = a + sign * da;
      if (sign * (a1 - a_next) < 0.5 * da) a_next = a1;  // land on the end
      try {
        const StrainState e = make_state(direction, a_next, regime);
        auto upd = reference_update(e, alpha, material);
        alpha = upd.alpha;
        PathStep step;
        step.eps = e;
        step.eps.eps_zz = upd.eps_zz;
        step.sig = upd.sig;
        raw.steps.push_back(step);
        a = a_next;
        da = std::min(da * control.growth, cap);
      } catch (const ReturnMapDiverged&) {
        da *= 0.5;
        if (da < control.min_step)
          throw GenerationFailed("generate_path: minimum step size reached");
      }
    }
  }
  return balance_path(raw, material, control.balanced_steps);
}

StrainPath balance_path(const StrainPath& raw, const ReferenceMaterial& material,
                        int n_steps) {
  const std::size_t n_raw = raw.steps.size();
  if (n_raw < 2) throw TooFewIncrements("balance_path: need >= 2 increments");

  // signed amplitudes along the load direction (virtual 0 start)
  std::vector<double> amp(n_raw);
  for (std::size_t i = 0; i < n_raw; ++i)
    amp[i] = raw.direction.dot(raw.steps[i].eps.eps);

  // monotone branches as [first, last] raw index ranges plus start amplitude
  struct Branch {
    std::size_t first, last;
    double a_start, a_end;
  };
  std::vector<Branch> branches;
  {
    std::size_t first = 0;
    double a_start = 0.0;
    double dir = amp[0] - a_start >= 0 ? 1.0 : -1.0;
    for (std::size_t i = 1; i < n_raw; ++i) {
      const double d = amp[i] - amp[i - 1];
      if (d * dir < 0.0) {
        branches.push_back({first, i - 1, a_start, amp[i - 1]});
        a_start = amp[i - 1];
        first = i;
        dir = -dir;
      }
    }
    branches.push_back({first, n_raw - 1, a_start, amp[n_raw - 1]});
  }

  // allocate snapshots per branch proportionally to amplitude travelled
  double total_len = 0.0;
  for (const auto& b : branches) total_len += std::abs(b.a_end - b.a_start);
  std::vector<int> alloc(branches.size(), 1);
  int assigned = (int)branches.size();
  if (assigned > n_steps)
    throw TooFewIncrements("balance_path: more branches than snapshots");
  std::vector<double> want(branches.size());
  for (std::size_t i = 0; i < branches.size(); ++i)
    want[i] = std::abs(branches[i].a_end - branches[i].a_start) / total_len *
              n_steps;
  while (assigned < n_steps) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const double deficit = want[i] - alloc[i];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = i;
      }
    }
    alloc[best] += 1;
    assigned += 1;
  }

  // replay the raw commit chain, keeping the internal state at every
  // increment so interpolated snapshots can branch off the chain
  std::vector<InternalState> states(n_raw);
  {
    InternalState alpha;
    for (std::size_t i = 0; i < n_raw; ++i) {
      alpha = reference_update(raw.steps[i].eps, alpha, material).alpha;
      states[i] = alpha;
    }
  }

  StrainPath out;
  out.id = raw.id;
  out.kind = raw.kind;
  out.regime = raw.regime;
  out.direction = raw.direction;
  out.seed = raw.seed;

  for (std::size_t bi = 0; bi < branches.size(); ++bi) {
    const Branch& b = branches[bi];
    const int n = alloc[bi];
    const std::size_t m = b.last - b.first + 1;
    std::size_t cursor = b.first;
    for (int k = 1; k <= n; ++k) {
      const double target =
          b.a_start + (double)k / n * (b.a_end - b.a_start);
      if ((std::size_t)n <= m) {
        // enough raw increments: pick the nearest one, order preserving
        // and leaving room for the remaining targets
        const std::size_t cap = b.last - (std::size_t)(n - k);
        while (cursor < cap &&
               std::abs(amp[cursor + 1] - target) <= std::abs(amp[cursor] - target))
          ++cursor;
        out.steps.push_back(raw.steps[cursor]);
        if (cursor < b.last) ++cursor;
      } else {
        // sparse branch: commit off a copy of the chain at the target
        std::size_t j = b.first;
        const double sgn = b.a_end > b.a_start ? 1.0 : -1.0;
        while (j < b.last && sgn * (amp[j] - target) < 0.0) ++j;
        if (std::abs(amp[j] - target) < 1e-14) {
          out.steps.push_back(raw.steps[j]);
        } else {
          const InternalState& from =
              j == 0 ? InternalState{} : states[j - 1];
          StrainState e = make_state(raw.direction, target, raw.regime);
          auto upd = reference_update(e, from, material);
          PathStep step;
          step.eps = e;
          step.eps.eps_zz = upd.eps_zz;
          step.sig = upd.sig;
          out.steps.push_back(step);
        }
      }
    }
  }
  return out;
}

PathDataset build_dataset(const DatasetConfig& config, Regime regime) {
  PathDataset ds;
  ds.regime = regime;
  ds.seed = config.seed;
  const std::uint64_t regime_salt = regime == Regime::PlaneStrain ? 1 : 2;

  int id = 0;
  auto make = [&](PathKind kind) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const std::uint64_t seed =
          mix_seed(config.seed, regime_salt * 1000003ULL + (std::uint64_t)id * 17ULL + attempt);
      std::mt19937_64 rng(seed);
      const Vector3 dir = sample_direction(rng);
      try {
        StrainPath p =
            generate_path(kind, dir, regime, config.material, config.control, rng);
        p.id = id;
        p.seed = seed;
        return p;
      } catch (const GenerationFailed&) {
        continue;
      }
    }
    throw GenerationFailed("build_dataset: repeated generation failures");
  };

  for (int i = 0; i < config.n_monotonic; ++i, ++id)
    ds.paths.push_back(make(PathKind::Monotonic));

  // train/validation split over the monotonic block
  std::vector<int> order(config.n_monotonic);
  for (int i = 0; i < config.n_monotonic; ++i) order[i] = i;
  std::mt19937_64 split_rng(mix_seed(config.seed, 777 + regime_salt));
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = std::min(config.n_train, config.n_monotonic);
  ds.train_idx.assign(order.begin(), order.begin() + n_train);
  ds.val_idx.assign(order.begin() + n_train, order.end());
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());

  for (PathKind kind :
       {PathKind::Monotonic, PathKind::UnloadReload, PathKind::SlowCycle}) {
    for (int i = 0; i < config.n_test_per_kind; ++i, ++id) {
      ds.paths.push_back(make(kind));
      ds.test_idx.push_back((int)ds.paths.size() - 1);
    }
  }
  return ds;
}

void save_dataset_csv(const PathDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# regime=" << regime_name(ds.regime) << "\n";
  out << "path_id,kind,step,eps_xx,eps_yy,gamma_xy,eps_zz,"
         "sig_xx,sig_yy,tau_xy,sig_zz\n";
  for (const auto& p : ds.paths) {
    for (std::size_t t = 0; t < p.steps.size(); ++t) {
      const auto& s = p.steps[t];
      out << p.id << ',' << to_string(p.kind) << ',' << t + 1 << ','
          << fmt(s.eps.eps[0]) << ',' << fmt(s.eps.eps[1]) << ','
          << fmt(s.eps.eps[2]) << ',' << fmt(s.eps.eps_zz) << ','
          << fmt(s.sig.sig[0]) << ',' << fmt(s.sig.sig[1]) << ','
          << fmt(s.sig.sig[2]) << ',' << fmt(s.sig.sig_zz) << '\n';
    }
  }
}

PathDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  PathDataset ds;
  std::string line;
  while (std::getline(in, line) && line.rfind("#", 0) == 0)
    if (line.rfind("# regime=", 0) == 0)
      ds.regime = regime_from_string(line.substr(9));
  // `line` now holds the column header

  StrainPath* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 11) throw std::runtime_error("bad dataset row: " + line);
    const int id = std::stoi(f[0]);
    if (!cur || cur->id != id) {
      ds.paths.emplace_back();
      cur = &ds.paths.back();
      cur->id = id;
      cur->kind = path_kind_from_string(f[1]);
      cur->regime = ds.regime;
    }
    PathStep step;
    step.eps.regime = ds.regime;
    step.eps.eps << std::stod(f[3]), std::stod(f[4]), std::stod(f[5]);
    step.eps.eps_zz = std::stod(f[6]);
    step.sig.sig << std::stod(f[7]), std::stod(f[8]), std::stod(f[9]);
    step.sig.sig_zz = std::stod(f[10]);
    cur->steps.push_back(step);
  }
  // directions are recoverable from the proportional strain records
  for (auto& p : ds.paths) {
    double best = -1.0;
    for (const auto& s : p.steps) {
      const double n = s.eps.eps.norm();
      if (n > best) {
        best = n;
        p.direction = s.eps.eps / n;
      }
    }
  }
  return ds;
}

std::vector<std::string> build_datasets(const DatasetConfig& config) {
  std::vector<std::string> files;
  json manifest;
  manifest["seed"] = config.seed;
  manifest["n_monotonic"] = config.n_monotonic;
  manifest["n_train"] = config.n_train;
  manifest["n_test_per_kind"] = config.n_test_per_kind;
  manifest["material"] = {
      {"E", config.material.E},
      {"nu", config.material.nu},
      {"nu_p", config.material.nu_p},
      {"tension", {config.material.tension.sig0, config.material.tension.sig_inf,
                   config.material.tension.kappa0}},
      {"compression",
       {config.material.compression.sig0, config.material.compression.sig_inf,
        config.material.compression.kappa0}}};

  for (Regime regime : config.regimes) {
    PathDataset ds = build_dataset(config, regime);
    const std::string file =
        config.out_dir + "/dataset_" + regime_name(regime) + ".csv";
    save_dataset_csv(ds, file);
    files.push_back(file);

    json jr;
    jr["file"] = file;
    auto ids_of = [&](const std::vector<int>& idx) {
      std::vector<int> ids;
      for (int i : idx) ids.push_back(ds.paths[i].id);
      return ids;
    };
    jr["train_ids"] = ids_of(ds.train_idx);
    jr["val_ids"] = ids_of(ds.val_idx);
    jr["test_ids"] = ids_of(ds.test_idx);
    json jp = json::array();
    for (const auto& p : ds.paths)
      jp.push_back({{"id", p.id},
                    {"kind", to_string(p.kind)},
                    {"seed", p.seed},
                    {"direction", {p.direction[0], p.direction[1], p.direction[2]}}});
    jr["paths"] = jp;
    manifest["regimes"][regime_name(regime)] = jr;
  }

  const std::string mf = config.out_dir + "/manifest.json";
  std::ofstream out(mf);
  out << manifest.dump(2) << "\n";
  files.push_back(mf);
  return files;
}

void apply_manifest_split(PathDataset& ds, const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot read " + manifest_path);
  json manifest = json::parse(in);
  const auto& jr = manifest.at("regimes").at(regime_name(ds.regime));

  auto idx_of = [&](const std::vector<int>& ids) {
    std::vector<int> idx;
    for (int id : ids) {
      for (std::size_t i = 0; i < ds.paths.size(); ++i) {
        if (ds.paths[i].id == id) {
          idx.push_back((int)i);
          break;
        }
      }
    }
    return idx;
  };
  ds.train_idx = idx_of(jr.at("train_ids").get<std::vector<int>>());
  ds.val_idx = idx_of(jr.at("val_ids").get<std::vector<int>>());
  ds.test_idx = idx_of(jr.at("test_ids").get<std::vector<int>>());
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& jp : jr.at("paths")) {
    const int id = jp.at("id").get<int>();
    for (auto& p : ds.paths) {
      if (p.id == id) {
        p.seed = jp.at("seed").get<std::uint64_t>();
        const auto d = jp.at("direction");
        p.direction << d[0].get<double>(), d[1].get<double>(), d[2].get<double>();
        break;
      }
    }
  }
}

}  // namespace hybmat

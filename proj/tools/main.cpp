// hybmat: command-line front end for dataset generation, training,
// evaluation, and the finite-element demonstration. Every command is driven
// by a JSON config file; flags only select paths and overrides. All CSV
// outputs carry the FNV-1a hash of the canonical config in a leading
// comment line so a curve can always be traced back to its configuration.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hybmat/fesolve.hpp"

using json = nlohmann::json;
using namespace hybmat;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

/// Canonical hash of the effective configuration (sorted keys via dump).
std::string config_hash(const json& cfg) { return fnv1a64(cfg.dump()); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void prepend_comment(const std::string& path, const std::string& comment) {
  const std::string body = slurp(path);
  std::ofstream out(path, std::ios::binary);
  out << "# " << comment << "\n" << body;
}

ReferenceMaterial material_from_json(const json& cfg) {
  ReferenceMaterial m;
  if (!cfg.contains("material")) return m;
  const json& j = cfg.at("material");
  m.E = j.value("E", m.E);
  m.nu = j.value("nu", m.nu);
  m.nu_p = j.value("nu_p", m.nu_p);
  const auto hard = [&](const char* key, SaturatingHardening& h) {
    if (!j.contains(key)) return;
    const json& s = j.at(key);
    h.sig0 = s.value("sig0", h.sig0);
    h.sig_inf = s.value("sig_inf", h.sig_inf);
    h.kappa0 = s.value("kappa0", h.kappa0);
  };
  hard("tension", m.tension);
  hard("compression", m.compression);
  return m;
}

PathDataset load_split_dataset(const json& cfg) {
  if (!cfg.contains("dataset"))
    throw ConfigError("config key 'dataset' (CSV path) is required");
  PathDataset ds = load_dataset_csv(cfg.at("dataset").get<std::string>());
  if (!cfg.contains("manifest"))
    throw ConfigError("config key 'manifest' (JSON path) is required");
  apply_manifest_split(ds, cfg.at("manifest").get<std::string>());
  return ds;
}

TrainConfig train_config_from_json(const json& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.value("epochs", tc.epochs);
  tc.batch_paths = cfg.value("batch_paths", tc.batch_paths);
  tc.lr = cfg.value("lr", tc.lr);
  tc.seed = cfg.value("seed", (std::uint64_t)tc.seed);
  if (cfg.contains("hidden")) tc.hidden = cfg.at("hidden").get<std::vector<int>>();
  tc.dropout = cfg.value("dropout", tc.dropout);
  tc.log_every = cfg.value("log_every", tc.log_every);
  tc.verbose = tc.log_every > 0;
  return tc;
}

// ---------------------------------------------------------------- gen ----

int cmd_gen(const json& cfg) {
  DatasetConfig dc;
  dc.out_dir = cfg.value("out_dir", dc.out_dir);
  dc.seed = cfg.value("seed", (std::uint64_t)dc.seed);
  dc.n_monotonic = cfg.value("n_monotonic", dc.n_monotonic);
  dc.n_train = cfg.value("n_train", dc.n_train);
  dc.n_test_per_kind = cfg.value("n_test_per_kind", dc.n_test_per_kind);
  if (cfg.contains("regimes")) {
    dc.regimes.clear();
    for (const auto& r : cfg.at("regimes")) {
      try {
        dc.regimes.push_back(regime_from_string(r.get<std::string>()));
      } catch (const GenerationFailed& e) {
        throw ConfigError(e.what());
      }
    }
  }
  dc.material = material_from_json(cfg);
  if (dc.n_train >= dc.n_monotonic)
    throw ConfigError("n_train must be smaller than n_monotonic");

  fs::create_directories(dc.out_dir);
  const std::string hash = config_hash(cfg);
  const auto files = build_datasets(dc);
  for (const auto& f : files) {
    if (f.size() > 4 && f.compare(f.size() - 4, 4, ".csv") == 0) {
      prepend_comment(f, "config=" + hash);
    } else {  // JSON manifest: comments are illegal, use a key instead
      json m = json::parse(slurp(f));
      m["config_hash"] = hash;
      std::ofstream out(f);
      out << m.dump(2) << "\n";
    }
  }

  std::cout << "config " << hash << "\n";
  std::cout << "paths per regime: " << dc.n_monotonic << " monotonic ("
            << dc.n_train << " train, " << dc.n_monotonic - dc.n_train
            << " validation) + 3 x " << dc.n_test_per_kind << " test\n";
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- train ----

int cmd_train(const json& cfg) {
  const std::string hash = config_hash(cfg);
  PathDataset ds = load_split_dataset(cfg);
  const TrainConfig tc = train_config_from_json(cfg);
  const std::string checkpoint_out = cfg.value("checkpoint_out", "checkpoint.json");
  const std::string report_out = cfg.value("report_out", "report.csv");

  HybridSurrogate s;
  TrainState state;
  TrainingReport prev;
  if (cfg.contains("resume_from")) {
    s = load_checkpoint(cfg.at("resume_from").get<std::string>(), &prev, &state);
    std::cout << "resuming from epoch " << state.next_epoch << "\n";
  } else {
    s = make_surrogate(
        decoder_kind_from_string(cfg.value("decoder", "Melro")),
        feature_kind_from_string(cfg.value("features", "Precal_StressInv")), ds,
        ds.train_idx, tc);
  }
  const TrainingReport report = train(s, ds, ds.train_idx, ds.val_idx, tc, &state);

  save_checkpoint(s, report, checkpoint_out, &state, tc.seed);
  json ck = json::parse(slurp(checkpoint_out));
  ck["config_hash"] = hash;
  {
    std::ofstream out(checkpoint_out);
    out << ck.dump(2) << "\n";
  }
  save_report_csv(report, report_out, "config=" + hash);

  std::cout << "config " << hash << "\n";
  std::cout << "epochs " << report.history.size() << ", best epoch "
            << report.best_epoch << ", best validation loss "
            << report.best_val_loss << ", noise precision beta "
            << report.noise_precision_beta << "\n";
  std::cout << "wrote " << checkpoint_out << "\nwrote " << report_out << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- eval ----

int cmd_eval(const json& cfg) {
  const std::string hash = config_hash(cfg);
  PathDataset ds = load_split_dataset(cfg);
  if (!cfg.contains("checkpoint"))
    throw ConfigError("config key 'checkpoint' is required");
  const HybridSurrogate s =
      load_checkpoint(cfg.at("checkpoint").get<std::string>());
  const std::string out_path = cfg.value("out", "errors.csv");

  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write " + out_path);
  out << "# config=" << hash << "\n";
  out << "scope,mask,n_paths,mean_error\n";
  const auto row = [&](const std::string& scope, const std::vector<int>& idx) {
    for (StepMask mask : {StepMask::AllSteps, StepMask::NonMonotonicStepsOnly}) {
      const char* mname =
          mask == StepMask::AllSteps ? "AllSteps" : "NonMonotonicStepsOnly";
      out << scope << ',' << mname << ',' << idx.size() << ',';
      try {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", evaluate(s, ds, idx, mask));
        out << buf;
      } catch (const EmptySelection&) {
        // no qualifying steps under this mask (e.g. monotonic paths)
      }
      out << '\n';
    }
  };
  row("test", ds.test_idx);
  for (PathKind kind :
       {PathKind::Monotonic, PathKind::UnloadReload, PathKind::SlowCycle}) {
    std::vector<int> idx;
    for (int i : ds.test_idx)
      if (ds.paths[i].kind == kind) idx.push_back(i);
    if (!idx.empty()) row("test:" + to_string(kind), idx);
  }
  row("validation", ds.val_idx);

  std::cout << "config " << hash << "\nwrote " << out_path << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- fe ----

int cmd_fe(const json& cfg, bool dt_sweep_flag) {
  const std::string hash = config_hash(cfg);
  DemoConfig dc;
  dc.out_dir = cfg.value("out_dir", dc.out_dir);
  dc.header_comment = "config=" + hash;
  dc.total_u = cfg.value("total_u", dc.total_u);
  dc.ref_steps = cfg.value("ref_steps", dc.ref_steps);
  dc.du_factor = cfg.value("du_factor", dc.du_factor);
  dc.unload_reload = cfg.value("unload_reload", dc.unload_reload);
  if (cfg.contains("dt_sweep_factors"))
    dc.dt_sweep_factors = cfg.at("dt_sweep_factors").get<std::vector<double>>();
  if (dt_sweep_flag && dc.dt_sweep_factors.empty())
    dc.dt_sweep_factors = {0.1, 1.0, 10.0, 100.0};  // one curve per decade
  if (cfg.contains("stab_epochs_sweep"))
    dc.stab_epochs_sweep = cfg.at("stab_epochs_sweep").get<std::vector<int>>();
  dc.sweep_retrain_off = cfg.value("sweep_retrain_off", dc.sweep_retrain_off);
  dc.seed = cfg.value("seed", (std::uint64_t)dc.seed);
  dc.material = material_from_json(cfg);
  if (cfg.contains("stabilization")) {
    const json& j = cfg.at("stabilization");
    dc.stab.stab_epochs = j.value("epochs", dc.stab.stab_epochs);
    dc.stab.stab_lr = j.value("lr", dc.stab.stab_lr);
    dc.stab.retrain_paths = j.value("retrain_paths", dc.stab.retrain_paths);
    dc.stab.retrain_lr = j.value("retrain_lr", dc.stab.retrain_lr);
  }
  if (cfg.contains("controls")) {
    const json& j = cfg.at("controls");
    dc.controls.rel_tol = j.value("rel_tol", dc.controls.rel_tol);
    dc.controls.max_iterations =
        j.value("max_iterations", dc.controls.max_iterations);
    dc.controls.max_cancelled = j.value("max_cancelled", dc.controls.max_cancelled);
  }

  const Mesh mesh = cfg.contains("mesh")
                        ? load_mesh(cfg.at("mesh").get<std::string>())
                        : make_demo_mesh(cfg.value("mesh_nx", 24),
                                         cfg.value("mesh_ny", 10));
  validate_mesh(mesh);

  HybridSurrogate surrogate;
  HybridSurrogate* sp = nullptr;
  if (cfg.contains("checkpoint")) {
    surrogate = load_checkpoint(cfg.at("checkpoint").get<std::string>());
    sp = &surrogate;
  }
  PathDataset retrain;
  if (cfg.contains("dataset")) {
    retrain = load_split_dataset(cfg);
    dc.retrain_data = &retrain;
    dc.retrain_idx = retrain.train_idx;
    dc.val_idx = retrain.val_idx;
  }

  fs::create_directories(dc.out_dir);
  const auto files = run_demo(mesh, sp, dc);

  std::cout << "config " << hash << "\n";
  bool incomplete = false;
  for (const auto& f : files) {
    std::cout << "wrote " << f << "\n";
    if (slurp(f).find("# incomplete:") != std::string::npos) {
      std::cout << "run " << f << " terminated early\n";
      incomplete = true;
    }
  }
  return incomplete ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid material surrogate toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0: library default)");

  std::string gen_cfg, train_cfg, eval_cfg, fe_cfg;
  bool dt_sweep = false;
  CLI::App* gen = app.add_subcommand("gen", "generate strain-path datasets");
  gen->add_option("--config", gen_cfg, "JSON config")->required();
  CLI::App* tr = app.add_subcommand("train", "train a hybrid surrogate");
  tr->add_option("--config", train_cfg, "JSON config")->required();
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--config", eval_cfg, "JSON config")->required();
  CLI::App* fe = app.add_subcommand("fe", "finite-element demonstration");
  fe->add_option("--config", fe_cfg, "JSON config")->required();
  fe->add_flag("--dt-sweep", dt_sweep,
               "sweep the surrogate step over four orders of magnitude");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (threads > 0) Eigen::setNbThreads(threads);

  try {
    if (gen->parsed()) return cmd_gen(load_config(gen_cfg));
    if (tr->parsed()) return cmd_train(load_config(train_cfg));
    if (ev->parsed()) return cmd_eval(load_config(eval_cfg));
    if (fe->parsed()) return cmd_fe(load_config(fe_cfg), dt_sweep);
  } catch (const ReturnMapDiverged& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const StepFailed& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NonpositiveReference& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const GenerationFailed& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const TooFewIncrements& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

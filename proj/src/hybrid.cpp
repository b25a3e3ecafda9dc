#include "hybmat/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hybmat {

namespace {

using nlohmann::json;

int alpha_dim(DecoderKind kind) {
  return kind == DecoderKind::Elastic ? 0 : 7;
}

Eigen::VectorXd alpha_to_vec(const InternalState& a) {
  Eigen::VectorXd v(7);
  v.head<6>() = a.eps_p;
  v[6] = a.kappa;
  return v;
}

InternalState vec_to_alpha(const Eigen::VectorXd& v) {
  InternalState a;
  a.eps_p = v.head<6>();
  a.kappa = v[6];
  return a;
}

double fd_step(double x) { return std::max(1e-6 * std::abs(x), 1e-9); }

json vec_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Eigen::VectorXd json_to_vec(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::Elastic: return "Elastic";
    case DecoderKind::J2: return "J2";
    case DecoderKind::Melro: return "Melro";
  }
  throw ConfigInvalid("invalid decoder kind");
}

DecoderKind decoder_kind_from_string(const std::string& name) {
  if (name == "Elastic") return DecoderKind::Elastic;
  if (name == "J2") return DecoderKind::J2;
  if (name == "Melro") return DecoderKind::Melro;
  throw ConfigInvalid("unknown decoder kind: " + name);
}

int theta_dim(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::Elastic: return 2;
    case DecoderKind::J2: return 1;
    case DecoderKind::Melro: return 3;
  }
  throw ConfigInvalid("invalid decoder kind");
}

Bounds default_bounds(DecoderKind kind) {
  Bounds b;
  switch (kind) {
    case DecoderKind::Elastic:
      b.low = Eigen::Vector2d(1e1, 0.0);
      b.upp = Eigen::Vector2d(1e5, 0.5);
      return b;
    case DecoderKind::J2:
      b.low = Eigen::VectorXd::Constant(1, 1e1);
      b.upp = Eigen::VectorXd::Constant(1, 1e3);
      return b;
    case DecoderKind::Melro:
      b.low = Eigen::Vector3d(1e1, 1.0, 0.0);
      b.upp = Eigen::Vector3d(1e4, 100.0, 0.5);
      return b;
  }
  throw ConfigInvalid("invalid decoder kind");
}

UpdateResult decode(const HybridSurrogate& s, const Eigen::VectorXd& theta,
                    const StrainState& eps, const InternalState& alpha_prev) {
  switch (s.decoder) {
    case DecoderKind::Elastic:
      return elastic_update(eps, ElasticParams{theta[0], theta[1]});
    case DecoderKind::J2:
      return j2_update(eps, alpha_prev, J2Params{theta[0], s.fixed_E, s.fixed_nu});
    case DecoderKind::Melro:
      return melro_update(
          eps, alpha_prev,
          MelroParams{theta[0], theta[1], theta[2], s.fixed_E, s.fixed_nu});
  }
  throw ConfigInvalid("invalid decoder kind");
}

Tangent decoder_elastic_tangent(const HybridSurrogate& s, Regime regime) {
  StrainState zero;
  zero.regime = regime;
  return elastic_update(zero, ElasticParams{s.fixed_E, s.fixed_nu}).D;
}

Eigen::VectorXd standardize(const Standardization& st, const Eigen::VectorXd& phi) {
  return ((phi - st.mean).array() / st.stdev.array()).matrix();
}

Eigen::VectorXd predict_theta(const HybridSurrogate& s,
                              const Eigen::VectorXd& phi_raw) {
  return forward(s.net, standardize(s.standardization, phi_raw),
                 ForwardMode::Eval);
}

std::vector<StressState> predict_path(const HybridSurrogate& s,
                                      const StrainPath& path) {
  std::vector<StressState> out;
  out.reserve(path.steps.size());
  FeatureExtractor fx = s.make_extractor();
  InternalState alpha;
  for (std::size_t t = 0; t < path.steps.size(); ++t) {
    const StrainState& eps = path.steps[t].eps;
    const Eigen::VectorXd theta = predict_theta(s, fx.extract(eps));
    try {
      auto upd = decode(s, theta, eps, alpha);
      alpha = upd.alpha;
      out.push_back(upd.sig);
    } catch (const ReturnMapDiverged& e) {
      throw ReturnMapDiverged("predict_path step " + std::to_string(t + 1) +
                              ": " + e.what());
    }
    fx.commit(eps);
  }
  return out;
}

double loss(const std::vector<StressState>& pred, const StrainPath& target) {
  if (pred.size() != target.steps.size())
    throw ConfigInvalid("loss: length mismatch");
  double L = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    L += 0.5 * (pred[t].sig - target.steps[t].sig.sig).squaredNorm();
  return L;
}

double dataset_loss(const HybridSurrogate& s, const PathDataset& ds,
                    const std::vector<int>& idx) {
  double L = 0.0;
  for (int i : idx) L += loss(predict_path(s, ds.paths[i]), ds.paths[i]);
  return L;
}

Eigen::VectorXd path_gradient(const HybridSurrogate& s, const StrainPath& path,
                              ForwardMode mode, std::mt19937_64* rng,
                              double* loss_out) {
  const int T = (int)path.steps.size();
  const int n_th = theta_dim(s.decoder);
  const int n_al = alpha_dim(s.decoder);

  // forward sweep
  std::vector<ForwardCache> caches(T);
  std::vector<Eigen::VectorXd> thetas(T);
  std::vector<InternalState> alpha_in(T);
  std::vector<Vector3> sig_hat(T);
  {
    FeatureExtractor fx = s.make_extractor();
    InternalState alpha;
    for (int t = 0; t < T; ++t) {
      const StrainState& eps = path.steps[t].eps;
      const Eigen::VectorXd phi = standardize(s.standardization, fx.extract(eps));
      thetas[t] = forward(s.net, phi, mode, rng, &caches[t]);
      alpha_in[t] = alpha;
      auto upd = decode(s, thetas[t], eps, alpha);
      alpha = upd.alpha;
      sig_hat[t] = upd.sig.sig;
      fx.commit(eps);
    }
  }

  if (loss_out) {
    *loss_out = 0.0;
    for (int t = 0; t < T; ++t)
      *loss_out += 0.5 * (sig_hat[t] - path.steps[t].sig.sig).squaredNorm();
  }

  // central finite difference of (sig, alpha) w.r.t. one scalar input;
  // the perturbed decoder call is retried once with a smaller step
  const auto fd_pair = [&](const std::function<UpdateResult(double)>& eval,
                           double x, Vector3& dsig, Eigen::VectorXd& dal) {
    double h = fd_step(x);
    for (int attempt = 0;; ++attempt) {
      try {
        const auto up = eval(x + h);
        const auto dn = eval(x - h);
        dsig = (up.sig.sig - dn.sig.sig) / (2.0 * h);
        if (n_al > 0)
          dal = (alpha_to_vec(up.alpha) - alpha_to_vec(dn.alpha)) / (2.0 * h);
        return;
      } catch (const ReturnMapDiverged&) {
        if (attempt >= 1) throw;
        h *= 0.1;
      }
    }
  };

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(s.net.w.size());
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n_al);

  for (int t = T - 1; t >= 0; --t) {
    const StrainState& eps = path.steps[t].eps;
    const Vector3 g = sig_hat[t] - path.steps[t].sig.sig;

    Eigen::MatrixXd dsig_dth(3, n_th), dal_dth(n_al, n_th);
    for (int j = 0; j < n_th; ++j) {
      Vector3 ds;
      Eigen::VectorXd da(n_al);
      fd_pair(
          [&](double x) {
            Eigen::VectorXd th = thetas[t];
            th[j] = x;
            return decode(s, th, eps, alpha_in[t]);
          },
          thetas[t][j], ds, da);
      dsig_dth.col(j) = ds;
      if (n_al > 0) dal_dth.col(j) = da;
    }

    Eigen::VectorXd g_theta = dsig_dth.transpose() * g;
    if (n_al > 0) g_theta += dal_dth.transpose() * lambda;
    grad += backward(s.net, caches[t], g_theta);

    if (t > 0 && n_al > 0) {
      const Eigen::VectorXd a_vec = alpha_to_vec(alpha_in[t]);
      Eigen::MatrixXd dsig_dap(3, n_al), dal_dap(n_al, n_al);
      for (int j = 0; j < n_al; ++j) {
        Vector3 ds;
        Eigen::VectorXd da(n_al);
        fd_pair(
            [&](double x) {
              Eigen::VectorXd av = a_vec;
              av[j] = x;
              return decode(s, thetas[t], eps, vec_to_alpha(av));
            },
            a_vec[j], ds, da);
        dsig_dap.col(j) = ds;
        dal_dap.col(j) = da;
      }
      lambda = dsig_dap.transpose() * g + dal_dap.transpose() * lambda;
    }
  }
  return grad;
}

HybridSurrogate make_surrogate(DecoderKind decoder, FeatureKind features,
                               const PathDataset& ds,
                               const std::vector<int>& train_idx,
                               const TrainConfig& cfg) {
  HybridSurrogate s;
  s.decoder = decoder;
  s.feature_kind = features;

  const int n_f = feature_dim(features);
  std::vector<int> sizes;
  sizes.push_back(n_f);
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(theta_dim(decoder));
  s.net = init_weights(sizes, default_bounds(decoder), cfg.dropout, cfg.seed);

  // feature standardization constants from the training set, frozen
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_f);
  Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(n_f);
  long n = 0;
  for (int i : train_idx) {
    FeatureExtractor fx = s.make_extractor();
    for (const auto& step : ds.paths[i].steps) {
      const Eigen::VectorXd phi = fx.extract(step.eps);
      sum += phi;
      sum2 += phi.array().square().matrix();
      fx.commit(step.eps);
      ++n;
    }
  }
  if (n == 0) throw ConfigInvalid("make_surrogate: empty training set");
  s.standardization.mean = sum / (double)n;
  s.standardization.stdev =
      ((sum2 / (double)n).array() - s.standardization.mean.array().square())
          .max(0.0)
          .sqrt()
          .matrix();
  for (int i = 0; i < n_f; ++i)
    if (s.standardization.stdev[i] < 1e-12) s.standardization.stdev[i] = 1.0;

  // Output-bias initialization at a data-informed starting point. A plain
  // mid-box start is useless for the plasticity decoders: a yield stress
  // far above the stresses seen in the data keeps every step elastic, the
  // decoder partials with respect to theta vanish identically and training
  // never leaves the flat region. Place the initial parameters at the
  // stress/strain scale of the training set instead.
  double sig_scale = 0.0, eps_scale = 0.0;
  for (int i : train_idx)
    for (const auto& step : ds.paths[i].steps) {
      sig_scale += step.sig.sig.norm();
      eps_scale += step.eps.eps.norm();
    }
  sig_scale /= (double)n;
  eps_scale /= (double)n;
  Eigen::VectorXd theta0(theta_dim(decoder));
  switch (decoder) {
    case DecoderKind::Elastic:
      theta0 << sig_scale / std::max(eps_scale, 1e-12), 0.3;
      break;
    case DecoderKind::J2:
      theta0 << sig_scale;
      break;
    case DecoderKind::Melro:
      theta0 << sig_scale, 1.5, 0.3;
      break;
  }
  const long bias_off = s.net.w.size() - theta_dim(decoder);
  for (int i = 0; i < theta_dim(decoder); ++i) {
    const double f =
        std::clamp((theta0[i] - s.net.bounds.low[i]) /
                       (s.net.bounds.upp[i] - s.net.bounds.low[i]),
                   0.02, 0.98);
    s.net.w[bias_off + i] = std::log(f / (1.0 - f));
  }
  return s;
}

TrainingReport train(HybridSurrogate& s, const PathDataset& ds,
                     const std::vector<int>& train_idx,
                     const std::vector<int>& val_idx, const TrainConfig& cfg,
                     TrainState* state) {
  if (train_idx.empty() || val_idx.empty())
    throw ConfigInvalid("train: need non-empty train and validation sets");
  for (int i : train_idx)
    for (int j : val_idx)
      if (i == j) throw ConfigInvalid("train: train/validation sets overlap");

  TrainState local;
  TrainState& st = state ? *state : local;

  std::mt19937_64 rng(cfg.seed);
  if (!st.rng_state.empty()) {
    std::istringstream is(st.rng_state);
    is >> rng;
    s.net.w = st.current_w;
  } else {
    st.best_w = s.net.w;
    st.report.best_val_loss = std::numeric_limits<double>::infinity();
  }

  long n_obs = 0;
  for (int i : train_idx) n_obs += (long)ds.paths[i].steps.size();

  std::vector<int> order(train_idx);
  for (int epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_paths) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(s.net.w.size());
      const std::size_t end = std::min(order.size(), b + cfg.batch_paths);
      for (std::size_t i = b; i < end; ++i) {
        double pl = 0.0;
        grad += path_gradient(s, ds.paths[order[i]], ForwardMode::Train, &rng, &pl);
        train_loss += pl;
      }
      adam_step(s.net, grad, st.adam, AdamConfig{cfg.lr});
    }

    const double val_loss = dataset_loss(s, ds, val_idx);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NonFiniteLoss("train: non-finite loss at epoch " +
                          std::to_string(epoch));

    st.report.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < st.report.best_val_loss) {
      st.report.best_val_loss = val_loss;
      st.report.best_epoch = epoch;
      st.best_w = s.net.w;
      st.report.noise_precision_beta =
          train_loss > 0.0 ? (double)n_obs / (2.0 * train_loss) : 0.0;
    }
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0)
      std::fprintf(stderr, "epoch %d train %.6g val %.6g\n", epoch, train_loss,
                   val_loss);
  }

  st.next_epoch = cfg.epochs;
  st.current_w = s.net.w;
  std::ostringstream os;
  os << rng;
  st.rng_state = os.str();

  s.net.w = st.best_w;  // keep the historically best validation model
  return st.report;
}

std::vector<bool> nonmonotonic_mask(const StrainPath& path) {
  std::vector<bool> mask(path.steps.size(), false);
  double prev = 0.0;
  double peak = 0.0;
  bool reversed = false;
  for (std::size_t t = 0; t < path.steps.size(); ++t) {
    const double n = path.steps[t].eps.eps.norm();
    const double tol = 1e-9 * std::max(peak, 1.0e-12);
    if (t > 0 && n < prev - tol) {
      mask[t] = true;
      reversed = true;
    } else if (reversed && n < peak - tol) {
      mask[t] = true;  // reloading below the historical peak
    }
    peak = std::max(peak, n);
    prev = n;
  }
  return mask;
}

double evaluate(const HybridSurrogate& s, const PathDataset& ds,
                const std::vector<int>& idx, StepMask mask) {
  double sum = 0.0;
  long n = 0;
  for (int i : idx) {
    const StrainPath& p = ds.paths[i];
    const auto pred = predict_path(s, p);
    const auto nm = nonmonotonic_mask(p);
    for (std::size_t t = 0; t < p.steps.size(); ++t) {
      if (mask == StepMask::NonMonotonicStepsOnly && !nm[t]) continue;
      sum += (pred[t].sig - p.steps[t].sig.sig).norm();
      ++n;
    }
  }
  if (n == 0) throw EmptySelection("evaluate: mask selected no steps");
  return sum / (double)n;
}

void save_checkpoint(const HybridSurrogate& s, const TrainingReport& report,
                     const std::string& path, const TrainState* state,
                     std::uint64_t seed) {
  json j;
  j["format"] = "hybmat-checkpoint-1";
  j["layer_sizes"] = s.net.layer_sizes;
  j["activation"] = "SELU";
  j["dropout_rate"] = s.net.dropout_rate;
  j["bounds_low"] = vec_to_json(s.net.bounds.low);
  j["bounds_upp"] = vec_to_json(s.net.bounds.upp);
  j["feature_kind"] = to_string(s.feature_kind);
  j["decoder"] = to_string(s.decoder);
  j["fixed_E"] = s.fixed_E;
  j["fixed_nu"] = s.fixed_nu;
  j["precal"] = {{"E", s.precal.E},
                 {"nu", s.precal.nu},
                 {"nu_p", s.precal.nu_p},
                 {"tension",
                  {s.precal.tension.sig0, s.precal.tension.sig_inf,
                   s.precal.tension.kappa0}},
                 {"compression",
                  {s.precal.compression.sig0, s.precal.compression.sig_inf,
                   s.precal.compression.kappa0}}};
  j["standardization_mean"] = vec_to_json(s.standardization.mean);
  j["standardization_stdev"] = vec_to_json(s.standardization.stdev);
  j["weights"] = vec_to_json(s.net.w);
  j["seed"] = seed;
  j["best_epoch"] = report.best_epoch;
  j["best_val_loss"] = report.best_val_loss;
  j["noise_precision_beta"] = report.noise_precision_beta;

  if (state) {
    json t;
    t["next_epoch"] = state->next_epoch;
    t["current_weights"] = vec_to_json(state->current_w);
    t["adam_m"] = vec_to_json(state->adam.m);
    t["adam_v"] = vec_to_json(state->adam.v);
    t["adam_t"] = state->adam.t;
    t["rng_state"] = state->rng_state;
    json h = json::array();
    for (const auto& r : state->report.history)
      h.push_back({r.epoch, r.train_loss, r.val_loss});
    t["history"] = h;
    j["training"] = t;
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

HybridSurrogate load_checkpoint(const std::string& path,
                                TrainingReport* report, TrainState* state,
                                std::uint64_t* seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j = json::parse(in);

  HybridSurrogate s;
  s.feature_kind = feature_kind_from_string(j.at("feature_kind"));
  s.decoder = decoder_kind_from_string(j.at("decoder"));
  s.fixed_E = j.at("fixed_E");
  s.fixed_nu = j.at("fixed_nu");
  const auto& jp = j.at("precal");
  s.precal.E = jp.at("E");
  s.precal.nu = jp.at("nu");
  s.precal.nu_p = jp.at("nu_p");
  s.precal.tension = {jp.at("tension")[0], jp.at("tension")[1], jp.at("tension")[2]};
  s.precal.compression = {jp.at("compression")[0], jp.at("compression")[1],
                          jp.at("compression")[2]};
  s.net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  s.net.dropout_rate = j.at("dropout_rate");
  s.net.bounds.low = json_to_vec(j.at("bounds_low"));
  s.net.bounds.upp = json_to_vec(j.at("bounds_upp"));
  s.net.w = json_to_vec(j.at("weights"));
  s.standardization.mean = json_to_vec(j.at("standardization_mean"));
  s.standardization.stdev = json_to_vec(j.at("standardization_stdev"));

  if (report) {
    report->best_epoch = j.at("best_epoch");
    report->best_val_loss = j.at("best_val_loss");
    report->noise_precision_beta = j.at("noise_precision_beta");
  }
  if (seed) *seed = j.at("seed").get<std::uint64_t>();
  if (state && j.contains("training")) {
    const auto& t = j.at("training");
    state->next_epoch = t.at("next_epoch");
    state->current_w = json_to_vec(t.at("current_weights"));
    state->best_w = s.net.w;
    state->adam.m = json_to_vec(t.at("adam_m"));
    state->adam.v = json_to_vec(t.at("adam_v"));
    state->adam.t = t.at("adam_t");
    state->rng_state = t.at("rng_state");
    state->report.history.clear();
    for (const auto& r : t.at("history"))
      state->report.history.push_back({r[0].get<int>(), r[1].get<double>(),
                                       r[2].get<double>()});
    state->report.best_epoch = j.at("best_epoch");
    state->report.best_val_loss = j.at("best_val_loss");
    state->report.noise_precision_beta = j.at("noise_precision_beta");
  }
  return s;
}

void save_report_csv(const TrainingReport& report, const std::string& path,
                     const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "epoch,train_loss,val_loss\n";
  char buf[80];
  for (const auto& r : report.history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.val_loss);
    out << buf;
  }
}

}  // namespace hybmat

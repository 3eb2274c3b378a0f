#include "lbl/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lbl/errors.hpp"

namespace lbl {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& section, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null())
    throw Error(ErrorKind::Config, "missing key '" + (section.empty() ? key : section + "." + key) + "'");
  return *it;
}

const json* optional_key(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <typename T>
T as(const json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, "key '" + where + "' has the wrong type: " + e.what());
  }
}

std::vector<double> numbers(const json& value, const std::string& where) {
  if (!value.is_array()) throw Error(ErrorKind::Config, "key '" + where + "' must be an array of numbers");
  return as<std::vector<double>>(value, where);
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<Vec> vector_list(const json& value, const std::string& where) {
  if (!value.is_array()) throw Error(ErrorKind::Config, "key '" + where + "' must be an array of arrays");
  std::vector<Vec> out;
  for (std::size_t i = 0; i < value.size(); ++i)
    out.push_back(to_vec(numbers(value[i], where + "[" + std::to_string(i) + "]")));
  return out;
}

const json& section(const json& doc, const std::string& name) {
  const auto& s = require(doc, "", name);
  if (!s.is_object()) throw Error(ErrorKind::Config, "section '" + name + "' must be an object");
  return s;
}

HmmParams parse_hmm(const json& s) {
  const auto H = as<std::size_t>(require(s, "hmm", "H"), "hmm.H");
  const auto X = as<std::size_t>(require(s, "hmm", "X"), "hmm.X");
  if (H == 0 || X == 0) throw Error(ErrorKind::Config, "hmm.H and hmm.X must be >= 1");
  const auto pi = numbers(require(s, "hmm", "pi"), "hmm.pi");
  const auto M = numbers(require(s, "hmm", "M"), "hmm.M");
  const auto E = numbers(require(s, "hmm", "E"), "hmm.E");
  if (pi.size() != H) throw Error(ErrorKind::Config, "hmm.pi must have H entries");
  if (M.size() != H * H) throw Error(ErrorKind::Config, "hmm.M must have H*H entries (row-major)");
  if (E.size() != X * H) throw Error(ErrorKind::Config, "hmm.E must have X*H entries (column-major)");
  const auto h = static_cast<Eigen::Index>(H);
  const auto x = static_cast<Eigen::Index>(X);
  HmmParams p;
  p.initial_dist = to_vec(pi);
  p.transition = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(M.data(), h, h);
  p.emission = Eigen::Map<const Mat>(E.data(), x, h);
  validate(p);
  return p;
}

RewardSection parse_reward(const json& s) {
  RewardSection r;
  if (const auto* m = optional_key(s, "model")) r.model = parse_reward_model(as<std::string>(*m, "reward.model"));
  const auto& t = require(s, "reward", "transfer");
  if (!t.is_object()) throw Error(ErrorKind::Config, "reward.transfer must be an object");
  r.transfer.kind = parse_transfer_kind(as<std::string>(require(t, "reward.transfer", "kind"), "reward.transfer.kind"));
  switch (r.transfer.kind) {
    case TransferKind::OneHotAction:
      r.transfer.num_actions = as<std::size_t>(require(t, "reward.transfer", "actions"), "reward.transfer.actions");
      break;
    case TransferKind::ActionContextOuter:
      r.transfer.num_actions = as<std::size_t>(require(t, "reward.transfer", "actions"), "reward.transfer.actions");
      r.transfer.features = vector_list(require(t, "reward.transfer", "features"), "reward.transfer.features");
      break;
    case TransferKind::Table: {
      const auto& tab = require(t, "reward.transfer", "table");
      if (!tab.is_array()) throw Error(ErrorKind::Config, "reward.transfer.table must be [action][context][dim]");
      for (std::size_t a = 0; a < tab.size(); ++a)
        r.transfer.table.push_back(vector_list(tab[a], "reward.transfer.table[" + std::to_string(a) + "]"));
      r.transfer.num_actions = r.transfer.table.size();
      break;
    }
  }
  if (const auto* th = optional_key(s, "theta_star")) r.theta_star = vector_list(*th, "reward.theta_star");
  if (const auto* c = optional_key(s, "c_theta")) r.c_theta = as<double>(*c, "reward.c_theta");
  if (const auto* g = optional_key(s, "generate")) {
    if (const auto* seed = optional_key(*g, "seed")) r.generate_seed = as<std::uint64_t>(*seed, "reward.generate.seed");
    if (const auto* tg = optional_key(*g, "target")) r.generate_target = as<double>(*tg, "reward.generate.target");
  }
  r.noise = parse_noise_kind(as<std::string>(require(s, "reward", "noise"), "reward.noise"));
  if (r.noise == NoiseKind::Gaussian)
    r.v_eta = as<double>(require(s, "reward", "v_eta"), "reward.v_eta");
  else
    r.c_eta = as<double>(require(s, "reward", "c_eta"), "reward.c_eta");
  return r;
}

PolicySection parse_policy(const json& s) {
  PolicySection p;
  const auto& name = require(s, "policy", "name");
  if (name.is_string())
    p.names.push_back(name.get<std::string>());
  else
    p.names = as<std::vector<std::string>>(name, "policy.name");
  for (const auto& n : p.names)
    if (n != "boxA" && n != "boxB" && n != "oracle" && n != "random")
      throw Error(ErrorKind::Config, "policy.name must be boxA, boxB, oracle or random, got '" + n + "'");
  if (p.names.empty()) throw Error(ErrorKind::Config, "policy.name lists no policy");
  if (const auto* v = optional_key(s, "lambda")) p.lambda = as<double>(*v, "policy.lambda");
  if (const auto* v = optional_key(s, "ell")) p.ell = as<std::size_t>(*v, "policy.ell");
  if (const auto* v = optional_key(s, "delta")) p.delta = as<double>(*v, "policy.delta");
  if (const auto* v = optional_key(s, "gamma")) p.gamma = as<double>(*v, "policy.gamma");
  if (const auto* v = optional_key(s, "c_theta")) p.c_theta = as<double>(*v, "policy.c_theta");
  if (const auto* v = optional_key(s, "c_eta")) p.c_eta = as<double>(*v, "policy.c_eta");
  if (const auto* v = optional_key(s, "v_eta")) p.v_eta = as<double>(*v, "policy.v_eta");
  if (const auto* v = optional_key(s, "bonus_scope"))
    p.bonus_scope = parse_bonus_scope(as<std::string>(*v, "policy.bonus_scope"));
  if (const auto* v = optional_key(s, "refresh_period")) p.refresh_period = as<std::size_t>(*v, "policy.refresh_period");
  if (const auto* v = optional_key(s, "oracle_beliefs")) p.oracle_beliefs = as<bool>(*v, "policy.oracle_beliefs");
  if (const auto* v = optional_key(s, "on_estimator_failure")) {
    const auto mode = as<std::string>(*v, "policy.on_estimator_failure");
    if (mode != "keep" && mode != "fail")
      throw Error(ErrorKind::Config, "policy.on_estimator_failure must be 'keep' or 'fail'");
    p.tolerate_estimator_failures = mode == "keep";
  }
  if (p.lambda && !(*p.lambda > 0.0)) throw Error(ErrorKind::Config, "policy.lambda must be > 0");
  if (p.ell && *p.ell == 0) throw Error(ErrorKind::Config, "policy.ell must be >= 1");
  if (p.refresh_period && *p.refresh_period == 0) throw Error(ErrorKind::Config, "policy.refresh_period must be >= 1");
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw Error(ErrorKind::Config, "policy.delta must lie in (0, 1)");
  if (p.gamma && !(*p.gamma >= 0.0 && *p.gamma < 1.0)) throw Error(ErrorKind::Config, "policy.gamma must lie in [0, 1)");
  return p;
}

RunSection parse_run(const json& s) {
  RunSection r;
  r.horizons = as<std::vector<std::size_t>>(require(s, "run", "horizons"), "run.horizons");
  if (r.horizons.empty()) throw Error(ErrorKind::Config, "run.horizons is empty");
  for (auto T : r.horizons)
    if (T == 0) throw Error(ErrorKind::Config, "run.horizons must be positive");
  if (const auto* v = optional_key(s, "seeds")) {
    r.seeds = as<std::vector<std::uint64_t>>(*v, "run.seeds");
  } else {
    const auto n = as<std::size_t>(require(s, "run", "num_seeds"), "run.num_seeds");
    for (std::size_t i = 0; i < n; ++i) r.seeds.push_back(i);
  }
  if (r.seeds.empty()) throw Error(ErrorKind::Config, "run.seeds is empty");
  if (const auto* v = optional_key(s, "master_seed")) r.master_seed = as<std::uint64_t>(*v, "run.master_seed");
  if (const auto* v = optional_key(s, "output_dir")) r.output_dir = as<std::string>(*v, "run.output_dir");
  if (const auto* v = optional_key(s, "emit_oracle_columns")) r.emit_oracle_columns = as<bool>(*v, "run.emit_oracle_columns");
  if (const auto* v = optional_key(s, "exact_refilter")) r.exact_refilter = as<bool>(*v, "run.exact_refilter");
  if (const auto* v = optional_key(s, "plugin_gamma")) r.plugin_gamma = as<bool>(*v, "run.plugin_gamma");
  if (const auto* v = optional_key(s, "write_rounds")) r.write_rounds = as<bool>(*v, "run.write_rounds");
  if (const auto* v = optional_key(s, "workers")) r.workers = as<std::size_t>(*v, "run.workers");
  if (r.workers == 0) throw Error(ErrorKind::Config, "run.workers must be >= 1");
  return r;
}

EstimateSection parse_estimate(const json& s) {
  EstimateSection e;
  e.checkpoints = as<std::vector<std::size_t>>(require(s, "estimate", "checkpoints"), "estimate.checkpoints");
  if (const auto* v = optional_key(s, "num_seeds")) e.num_seeds = as<std::size_t>(*v, "estimate.num_seeds");
  for (std::size_t i = 0; i < e.checkpoints.size(); ++i)
    if (e.checkpoints[i] < 3 || (i > 0 && e.checkpoints[i] <= e.checkpoints[i - 1]))
      throw Error(ErrorKind::Config, "estimate.checkpoints must be increasing and >= 3");
  if (e.num_seeds == 0) throw Error(ErrorKind::Config, "estimate.num_seeds must be >= 1");
  return e;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::Config, "configuration must be a JSON object");
  ExperimentConfig cfg;
  cfg.source = doc;
  cfg.hmm = parse_hmm(section(doc, "hmm"));
  cfg.reward = parse_reward(section(doc, "reward"));
  cfg.policy = parse_policy(section(doc, "policy"));
  cfg.run = parse_run(section(doc, "run"));
  if (doc.contains("estimate")) cfg.estimate = parse_estimate(section(doc, "estimate"));
  // consistency between sections is checked by building the pieces once
  const auto phi = build_transfer(cfg);
  build_reward(cfg, phi);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

TransferFunction build_transfer(const ExperimentConfig& cfg) {
  const auto& t = cfg.reward.transfer;
  const auto X = cfg.hmm.num_contexts();
  switch (t.kind) {
    case TransferKind::OneHotAction:
      return TransferFunction::one_hot_action(t.num_actions, X);
    case TransferKind::ActionContextOuter:
      if (t.features.size() != X) throw Error(ErrorKind::Config, "reward.transfer.features needs one vector per context");
      return TransferFunction::action_context_outer(t.num_actions, t.features);
    case TransferKind::Table:
      for (const auto& row : t.table)
        if (row.size() != X) throw Error(ErrorKind::Config, "reward.transfer.table needs X vectors per action");
      return TransferFunction::table(t.table);
  }
  throw Error(ErrorKind::Config, "unknown transfer kind");
}

RewardSpec build_reward(const ExperimentConfig& cfg, const TransferFunction& phi) {
  const auto& r = cfg.reward;
  const NoiseModel noise =
      r.noise == NoiseKind::Gaussian ? NoiseModel::gaussian(r.v_eta) : NoiseModel::bounded_uniform(r.c_eta);
  RewardSpec spec;
  if (r.theta_star) {
    spec.theta_star = *r.theta_star;
    spec.noise = noise;
    spec.model = r.model;
    double largest = 0.0;
    for (const auto& th : spec.theta_star) largest = std::max(largest, th.norm());
    spec.c_theta = r.c_theta.value_or(largest);
  } else {
    spec = make_reward_spec(cfg.hmm.num_states(), phi, noise, r.model, r.generate_seed, r.generate_target);
    if (r.c_theta) spec.c_theta = *r.c_theta;
  }
  if (spec.num_states() != cfg.hmm.num_states())
    throw Error(ErrorKind::Config, "reward.theta_star needs one vector per hidden state");
  validate_reward(spec, phi);
  return spec;
}

std::size_t ceil_power(double base, double exponent) {
  const double v = std::pow(base, exponent);
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(v));
}

double default_lambda(const std::string& policy, std::size_t horizon) {
  const double T = static_cast<double>(horizon);
  return policy == "boxA" ? std::pow(T, 0.75) : std::sqrt(T);
}

std::size_t default_stage_length(std::size_t horizon) { return ceil_power(static_cast<double>(horizon), 0.75); }

std::string schema_text() {
  return R"(Configuration is a JSON object with the sections below. Matrices are flat
decimal arrays.

hmm
  H            int      number of hidden states
  X            int      number of contexts (H <= X for spectral estimation)
  pi           [H]      initial distribution
  M            [H*H]    transition matrix, row-major, rows sum to 1
  E            [X*H]    emission matrix, column-major, column h is the
                        context law of state h

reward
  model        string   "state_dependent" (default) | "belief_dependent"
  transfer     object   {"kind": "one_hot_action", "actions": A}
                      | {"kind": "action_context_outer", "actions": A,
                         "features": [[...] per context]}
                      | {"kind": "table", "table": [action][context][dim]}
  theta_star   [H][d]   explicit parameters; omit to generate them
  generate     object   {"seed": s, "target": 0.9} Gaussian draws rescaled
                        so max |phi' theta| = target
  c_theta      number   norm bound (default: largest norm of theta_star)
  noise        string   "gaussian" | "bounded_uniform"
  v_eta        number   gaussian standard deviation
  c_eta        number   bounded_uniform variance (half-width sqrt(3 c_eta))

policy
  name         string or [string]   "boxA" | "boxB" | "oracle" | "random"
  lambda       number   ridge parameter (boxA: T^0.75, boxB: T^0.5)
  ell          int      boxA stage length (ceil(T^0.75))
  delta        number   confidence level in (0,1), default 0.1
  gamma        number   forgetting rate in [0,1) (default: 1 - min(M)/max(M))
  c_theta      number   bonus norm bound (default: reward c_theta)
  c_eta        number   bonus noise variance (default: from reward noise)
  v_eta        number   bonus sub-Gaussian scale (default: from reward noise)
  bonus_scope  string   "full" (default) | "partial"
  refresh_period int    boxB re-estimation period (ceil(sqrt(T)))
  oracle_beliefs bool   feed true beliefs and drop the belief-error budget
  on_estimator_failure string  "keep" (default) | "fail"

run
  horizons     [int]    horizon grid
  seeds        [int]    seed labels; or num_seeds: n for 0..n-1
  master_seed  int      overridden by LBL_SEED and --seed
  output_dir   string   default "results"; overridden by --out
  emit_oracle_columns bool  hidden state and beliefs in round CSVs
  exact_refilter bool   re-estimate and refilter every round
  plugin_gamma bool     use 1 - min(M_hat)/max(M_hat) after each estimate
  write_rounds bool     write per-round CSVs (default true)
  workers      int      worker threads (default 1)

estimate (only for the estimate subcommand)
  checkpoints  [int]    increasing sample sizes >= 3
  num_seeds    int      trajectories per checkpoint (default 10)
)";
}

}  // namespace lbl

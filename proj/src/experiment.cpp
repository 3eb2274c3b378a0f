#include "lbl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "lbl/belief_filter.hpp"
#include "lbl/errors.hpp"

namespace lbl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "lbl 0.1.0";

// Shortest round-trip representation, identical on every run.
void put_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void put_index(std::string& out, std::size_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

bool uses_estimator(const ExperimentConfig& cfg, const std::string& policy) {
  return (policy == "boxA" || policy == "boxB") && !cfg.policy.oracle_beliefs;
}

BonusConfig make_bonus_config(const ExperimentConfig& cfg, const RewardSpec& spec, const TransferFunction& phi) {
  BonusConfig b;
  b.delta = cfg.policy.delta;
  b.gamma = cfg.policy.gamma ? *cfg.policy.gamma : forgetting_rate(cfg.hmm);
  b.c_theta = cfg.policy.c_theta.value_or(spec.c_theta);
  b.c_eta = cfg.policy.c_eta.value_or(spec.noise.c_eta);
  b.v_eta = cfg.policy.v_eta.value_or(spec.noise.v_eta);
  b.H = cfg.hmm.num_states();
  b.X = cfg.hmm.num_contexts();
  b.d = phi.dim();
  b.scope = cfg.policy.bonus_scope;
  b.oracle_beliefs = cfg.policy.oracle_beliefs;
  return b;
}

std::unique_ptr<Policy> make_policy(const ExperimentConfig& cfg, const RewardSpec& spec, const TransferFunction& phi,
                                    const CellSpec& cell, std::uint64_t seed, const CellOptions& options) {
  if (cell.policy == "oracle") return std::make_unique<OraclePolicy>(phi, spec);
  if (cell.policy == "random")
    return std::make_unique<RandomPolicy>(phi.num_actions(), derive_seed(seed, {stream_id("policy"), stream_id("random")}));
  LinUcbOptions o;
  o.lambda = cfg.policy.lambda.value_or(default_lambda(cell.policy, cell.horizon));
  o.horizon = cell.horizon;
  o.bonus = make_bonus_config(cfg, spec, phi);
  o.bonus_override = options.bonus_override;
  if (cell.policy == "boxA")
    return std::make_unique<StagedLinUcb>(phi, o, cfg.policy.ell.value_or(default_stage_length(cell.horizon)));
  if (cell.policy == "boxB") return std::make_unique<LinUcb>(phi, o);
  throw Error(ErrorKind::Config, "unknown policy '" + cell.policy + "'");
}

std::size_t refresh_period_for(const ExperimentConfig& cfg, const CellSpec& cell) {
  if (cell.policy == "boxA") return cfg.policy.ell.value_or(default_stage_length(cell.horizon));
  return cfg.policy.refresh_period.value_or(ceil_power(static_cast<double>(cell.horizon), 0.5));
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t master, std::size_t horizon, std::uint64_t seed) {
  return derive_seed(master, {stream_id("cell"), static_cast<std::uint64_t>(horizon), seed});
}

CellResult run_cell(const ExperimentConfig& cfg, const RewardSpec& spec, const TransferFunction& phi,
                    const CellSpec& cell, std::ostream* rounds_csv, const CellOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto seed = cell_seed(cfg.run.master_seed, cell.horizon, cell.seed);
  const auto H = cfg.hmm.num_states();
  Environment env(cfg.hmm, spec, phi, cell.horizon, derive_seed(seed, {stream_id("environment")}));
  auto policy = make_policy(cfg, spec, phi, cell, seed, options);

  std::optional<SpectralBeliefEstimator> estimator;
  if (uses_estimator(cfg, cell.policy)) {
    EstimatorOptions eo;
    eo.num_states = H;
    eo.num_contexts = cfg.hmm.num_contexts();
    eo.refresh_period = refresh_period_for(cfg, cell);
    eo.exact_refilter = cfg.run.exact_refilter;
    eo.tolerate_failures = cfg.policy.tolerate_estimator_failures;
    eo.seed = derive_seed(seed, {stream_id("estimator")});
    estimator.emplace(std::move(eo));
  }

  CellResult result;
  result.cell = cell;
  RegretLedger ledger;
  ledger.per_round_benchmark.reserve(cell.horizon);
  ledger.per_round_value.reserve(cell.horizon);
  ledger.cumulative.reserve(cell.horizon);
  if (options.keep_actions) result.actions.reserve(cell.horizon);

  std::string buf;
  const bool oracle_cols = options.emit_oracle_columns || cfg.run.emit_oracle_columns;
  if (rounds_csv) {
    buf = "t,x,a,r,regret_inc";
    if (oracle_cols) {
      buf += ",h";
      for (std::size_t h = 1; h <= H; ++h) buf += ",b" + std::to_string(h);
      for (std::size_t h = 1; h <= H; ++h) buf += ",b" + std::to_string(h) + "_hat";
    }
    buf += '\n';
  }

  std::size_t seen_refreshes = 0;
  for (std::size_t t = 1; t <= cell.horizon; ++t) {
    const auto x = env.next_context();
    const Vec* belief = &env.true_belief();
    if (estimator) {
      belief = &estimator->observe(x).probs;
      if (cfg.run.plugin_gamma && estimator->refreshes() != seen_refreshes) {
        seen_refreshes = estimator->refreshes();
        try {
          policy->set_gamma(plugin_gamma(estimator->estimate()->transition_hat));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NotMixing) throw;
        }
      }
    }
    const auto a = policy->act(Observation{t, x, *belief});
    const auto rec = env.step(a);
    policy->observe_reward(rec.reward);
    const double inc = record_round(ledger, rec.true_belief, x, a, spec, phi);
    if (options.keep_actions) result.actions.push_back(a);
    if (rounds_csv) {
      put_index(buf, t);
      buf += ',';
      put_index(buf, x);
      buf += ',';
      put_index(buf, a);
      buf += ',';
      put_double(buf, rec.reward);
      buf += ',';
      put_double(buf, inc);
      if (oracle_cols) {
        buf += ',';
        put_index(buf, rec.hidden);
        for (Eigen::Index h = 0; h < rec.true_belief.size(); ++h) {
          buf += ',';
          put_double(buf, rec.true_belief(h));
        }
        for (Eigen::Index h = 0; h < belief->size(); ++h) {
          buf += ',';
          put_double(buf, (*belief)(h));
        }
      }
      buf += '\n';
      if (buf.size() > (1u << 20)) {
        *rounds_csv << buf;
        buf.clear();
      }
    }
  }
  if (rounds_csv) *rounds_csv << buf;

  result.regret = ledger.total();
  if (!std::isfinite(result.regret)) throw Error(ErrorKind::NonFinite, "cumulative regret is not finite");
  if (estimator) {
    result.estimator_refreshes = estimator->refreshes();
    result.estimator_failures = estimator->failures();
  }
  if (const auto* b = dynamic_cast<const LinUcb*>(policy.get())) result.max_inverse_drift = b->max_inverse_drift();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::vector<CellSpec> experiment_cells(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  for (const auto& p : cfg.policy.names)
    for (auto T : cfg.run.horizons)
      for (auto s : cfg.run.seeds) cells.push_back({p, T, s});
  return cells;
}

namespace {

// Runs `work(i)` for i in [0, n) on up to `workers` threads. Every index is
// attempted unless an earlier failure stops the queue; the first failing
// index (in grid order) is rethrown after all threads join.
template <typename Work>
void parallel_for(std::size_t n, std::size_t workers, Work&& work) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::vector<std::exception_ptr> errors(n);
  auto loop = [&] {
    while (!stop.load()) {
      const auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
        stop.store(true);
      }
    }
  };
  const auto count = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < count; ++w) threads.emplace_back(loop);
  loop();
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

GridResult run_grid(const ExperimentConfig& cfg, std::size_t workers, const CellOptions& options) {
  const auto phi = build_transfer(cfg);
  const auto spec = build_reward(cfg, phi);
  const auto cells = experiment_cells(cfg);
  GridResult out;
  out.cells.resize(cells.size());
  parallel_for(cells.size(), workers,
               [&](std::size_t i) { out.cells[i] = run_cell(cfg, spec, phi, cells[i], nullptr, options); });
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::InvalidArgument, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string rounds_file_name(const CellSpec& cell) {
  return cell.policy + "_T" + std::to_string(cell.horizon) + "_s" + std::to_string(cell.seed) + ".csv";
}

double rounds_csv_regret(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  double total = 0.0;
  while (std::getline(in, line)) {
    std::size_t pos = 0;
    for (int field = 0; field < 4; ++field) pos = line.find(',', pos) + 1;
    const auto end = line.find(',', pos);
    double v = 0.0;
    const char* first = line.data() + pos;
    const char* last = line.data() + (end == std::string::npos ? line.size() : end);
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc()) throw Error(ErrorKind::InvalidArgument, "bad regret_inc field in " + path.string());
    total += v;
  }
  return total;
}

namespace {

std::string summary_csv(const std::vector<CellResult>& cells) {
  std::string s = "policy,T,seed,R_T,log_T,log_R_T,estimator_refreshes,estimator_failures\n";
  for (const auto& c : cells) {
    s += c.cell.policy;
    s += ',';
    put_index(s, c.cell.horizon);
    s += ',';
    s += std::to_string(c.cell.seed);
    s += ',';
    put_double(s, c.regret);
    s += ',';
    put_double(s, std::log(static_cast<double>(c.cell.horizon)));
    s += ',';
    put_double(s, std::log(c.regret));
    s += ',';
    put_index(s, c.estimator_refreshes);
    s += ',';
    put_index(s, c.estimator_failures);
    s += '\n';
  }
  return s;
}

json fits_json(const std::vector<CellResult>& cells, std::uint64_t seed) {
  std::map<std::string, std::map<std::size_t, std::vector<double>>> grouped;
  for (const auto& c : cells) grouped[c.cell.policy][c.cell.horizon].push_back(c.regret);
  json fits = json::object();
  for (const auto& [policy, results] : grouped) {
    try {
      const auto fit = fit_rate(results, seed);
      fits[policy] = {{"slope", fit.slope},
                      {"intercept", fit.intercept},
                      {"slope_ci", {fit.ci_low, fit.ci_high}},
                      {"horizons", fit.horizons},
                      {"mean_R_T", fit.final_regrets}};
    } catch (const Error& e) {
      fits[policy] = {{"error", e.what()}};
    }
  }
  return fits;
}

void write_summaries(const fs::path& dir, const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  write_file_atomic(dir / "summary.csv", summary_csv(cells));
  json j;
  j["version"] = kVersion;
  j["master_seed"] = cfg.run.master_seed;
  j["cells"] = json::array();
  for (const auto& c : cells)
    j["cells"].push_back({{"policy", c.cell.policy},
                          {"T", c.cell.horizon},
                          {"seed", c.cell.seed},
                          {"R_T", c.regret},
                          {"wall_seconds", c.wall_seconds},
                          {"estimator_refreshes", c.estimator_refreshes},
                          {"estimator_failures", c.estimator_failures},
                          {"rounds_csv", cfg.run.write_rounds ? "rounds/" + rounds_file_name(c.cell) : ""}});
  j["fits"] = fits_json(cells, cfg.run.master_seed);
  write_file_atomic(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace

SimulateReport simulate(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path dir = cfg.run.output_dir;
  fs::create_directories(dir);
  const auto marker = dir / "FAILED";
  write_file_atomic(marker, "run in progress\n");
  json snapshot = cfg.source;
  snapshot["run"]["master_seed"] = cfg.run.master_seed;
  write_file_atomic(dir / "config.json", snapshot.dump(2) + "\n");

  const auto phi = build_transfer(cfg);
  const auto spec = build_reward(cfg, phi);
  const auto cells = experiment_cells(cfg);
  std::vector<std::optional<CellResult>> results(cells.size());
  std::mutex log_mutex;

  const auto finished = [&] {
    std::vector<CellResult> done;
    for (const auto& r : results)
      if (r) done.push_back(*r);
    return done;
  };

  try {
    parallel_for(cells.size(), cfg.run.workers, [&](std::size_t i) {
      const auto& cell = cells[i];
      CellResult r;
      if (cfg.run.write_rounds) {
        std::ostringstream csv;
        r = run_cell(cfg, spec, phi, cell, &csv);
        const auto path = dir / "rounds" / rounds_file_name(cell);
        write_file_atomic(path, csv.str());
        const double check = rounds_csv_regret(path);
        if (std::abs(check - r.regret) > 1e-9 * std::max(1.0, std::abs(r.regret)))
          throw Error(ErrorKind::InvalidArgument, "summary R_T disagrees with " + path.string());
      } else {
        r = run_cell(cfg, spec, phi, cell, nullptr);
      }
      {
        std::lock_guard<std::mutex> lock(log_mutex);
        log << cell.policy << " T=" << cell.horizon << " seed=" << cell.seed << " R_T=" << r.regret;
        if (r.estimator_refreshes || r.estimator_failures)
          log << " refreshes=" << r.estimator_refreshes << " failures=" << r.estimator_failures;
        log << '\n';
        log.flush();
      }
      results[i] = std::move(r);
    });
  } catch (const std::exception& e) {
    write_summaries(dir, cfg, finished());
    write_file_atomic(marker, std::string("run failed: ") + e.what() + "\n");
    throw;
  }
  SimulateReport report;
  report.cells = finished();
  report.output_dir = dir;
  write_summaries(dir, cfg, report.cells);
  fs::remove(marker);
  return report;
}

std::map<std::string, std::map<std::size_t, std::vector<double>>> read_summary(const fs::path& dir) {
  const auto path = dir / "summary.csv";
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InsufficientData, "empty summary.csv");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::Config, "summary.csv lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto ip = col("policy"), iT = col("T"), iR = col("R_T");
  std::map<std::string, std::map<std::size_t, std::vector<double>>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < header.size()) throw Error(ErrorKind::Config, "short row in summary.csv");
    out[fields[ip]][std::stoull(fields[iT])].push_back(std::stod(fields[iR]));
  }
  return out;
}

std::vector<EstimateRow> estimation_curve(const ExperimentConfig& cfg) {
  const auto& checkpoints = cfg.estimate.checkpoints;
  if (checkpoints.empty()) throw Error(ErrorKind::Config, "missing key 'estimate.checkpoints'");
  const auto H = cfg.hmm.num_states();
  const auto X = cfg.hmm.num_contexts();
  const auto n = cfg.estimate.num_seeds;
  std::vector<std::vector<double>> m_err(checkpoints.size()), e_err(checkpoints.size()), gaps(checkpoints.size());
  std::vector<std::size_t> failures(checkpoints.size(), 0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto seed = derive_seed(cfg.run.master_seed, {stream_id("estimate"), s});
    const auto traj = sample_trajectory(cfg.hmm, checkpoints.back(), seed);
    MomentAccumulator acc(X);
    std::size_t pushed = 0;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      while (pushed < checkpoints[c]) acc.push(traj.contexts[pushed++]);
      try {
        const auto est =
            postprocess(spectral_estimate(acc.snapshot(), H, derive_seed(seed, {stream_id("spectral"), c})));
        const auto err = estimation_error(cfg.hmm, est);
        m_err[c].push_back(err.transition);
        e_err[c].push_back(err.emission);
        const std::vector<ScheduledEstimate> schedule{{1, est}};
        const auto g = belief_error_trace(cfg.hmm, schedule, std::span(traj.contexts.data(), checkpoints[c]));
        gaps[c].insert(gaps[c].end(), g.begin(), g.end());
      } catch (const Error& e) {
        if (!is_numerical(e.kind())) throw;
        ++failures[c];
      }
    }
  }
  const auto median = [](std::vector<double> v) {
    if (v.empty()) return std::nan("");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  };
  std::vector<EstimateRow> rows;
  for (std::size_t c = 0; c < checkpoints.size(); ++c)
    rows.push_back({checkpoints[c], median(m_err[c]), median(e_err[c]), median(gaps[c]), failures[c]});
  return rows;
}

void write_estimation_csv(std::ostream& out, const std::vector<EstimateRow>& rows) {
  std::string s = "t,frobenius_M_err,frobenius_E_err,median_l1_belief_gap\n";
  for (const auto& r : rows) {
    put_index(s, r.t);
    s += ',';
    put_double(s, r.frobenius_M_err);
    s += ',';
    put_double(s, r.frobenius_E_err);
    s += ',';
    put_double(s, r.median_l1_belief_gap);
    s += '\n';
  }
  out << s;
}

std::uint64_t resolve_master_seed(std::uint64_t config_seed, std::optional<std::uint64_t> cli_seed) {
  std::uint64_t seed = config_seed;
  if (const char* env = std::getenv("LBL_SEED"); env && *env) {
    std::uint64_t v = 0;
    const auto* end = env + std::char_traits<char>::length(env);
    const auto res = std::from_chars(env, end, v);
    if (res.ec != std::errc() || res.ptr != end)
      throw Error(ErrorKind::Config, std::string("LBL_SEED is not an unsigned integer: '") + env + "'");
    seed = v;
  }
  if (cli_seed) seed = *cli_seed;
  return seed;
}

}  // namespace lbl

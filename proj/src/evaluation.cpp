#include "lbl/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "lbl/errors.hpp"

namespace lbl {

double record_round(RegretLedger& ledger, const Vec& true_belief, std::size_t context, std::size_t action,
                    const RewardSpec& spec, const TransferFunction& phi) {
  double best = belief_weighted_value(spec, phi, 0, context, true_belief);
  for (std::size_t a = 1; a < phi.num_actions(); ++a)
    best = std::max(best, belief_weighted_value(spec, phi, a, context, true_belief));
  const double value = belief_weighted_value(spec, phi, action, context, true_belief);
  ledger.per_round_benchmark.push_back(best);
  ledger.per_round_value.push_back(value);
  const double inc = best - value;
  ledger.cumulative.push_back(ledger.total() + inc);
  return inc;
}

std::pair<double, double> ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InsufficientData, "ols needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InsufficientData, "ols needs distinct x values");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

RateFit fit_rate(const std::map<std::size_t, std::vector<double>>& results, std::uint64_t bootstrap_seed,
                 std::size_t bootstrap_rounds) {
  if (results.size() < 4) throw Error(ErrorKind::InsufficientData, "rate fit needs >= 4 horizons");
  RateFit fit;
  std::vector<double> logT, logR;
  for (const auto& [T, regrets] : results) {
    if (T == 0) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
    if (regrets.size() < 10)
      throw Error(ErrorKind::InsufficientData, "horizon " + std::to_string(T) + " has fewer than 10 seeds");
    const double m = mean_of(regrets);
    if (!(m > 0.0))
      throw Error(ErrorKind::InvalidArgument, "mean regret at T=" + std::to_string(T) + " is not positive");
    fit.horizons.push_back(static_cast<double>(T));
    fit.final_regrets.push_back(m);
    logT.push_back(std::log(static_cast<double>(T)));
    logR.push_back(std::log(m));
  }
  std::tie(fit.slope, fit.intercept) = ols_fit(logT, logR);

  Engine engine = make_engine(derive_seed(bootstrap_seed, {stream_id("rate-bootstrap")}));
  std::vector<double> slopes;
  slopes.reserve(bootstrap_rounds);
  std::vector<double> resampled_log(results.size());
  for (std::size_t b = 0; b < bootstrap_rounds; ++b) {
    bool usable = true;
    std::size_t i = 0;
    for (const auto& [T, regrets] : results) {
      double s = 0.0;
      for (std::size_t k = 0; k < regrets.size(); ++k) s += regrets[uniform_index(engine, regrets.size())];
      const double m = s / static_cast<double>(regrets.size());
      if (!(m > 0.0)) usable = false;
      resampled_log[i++] = usable ? std::log(m) : 0.0;
    }
    if (usable) slopes.push_back(ols_fit(logT, resampled_log).first);
  }
  if (slopes.empty()) {
    fit.ci_low = fit.ci_high = fit.slope;
    return fit;
  }
  std::sort(slopes.begin(), slopes.end());
  const auto pick = [&](double q) {
    const double pos = q * static_cast<double>(slopes.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, slopes.size() - 1);
    return slopes[lo] + (pos - static_cast<double>(lo)) * (slopes[hi] - slopes[lo]);
  };
  fit.ci_low = pick(0.05);
  fit.ci_high = pick(0.95);
  return fit;
}

}  // namespace lbl

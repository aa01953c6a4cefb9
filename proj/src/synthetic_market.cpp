#include "itrack/synthetic_market.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "itrack/csv.hpp"
#include "itrack/errors.hpp"

namespace itrack {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t cell_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                        std::uint64_t salt) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ stream);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ salt);
}

// Uniform in (0, 1) from the top 53 bits.
double to_open_unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

enum Stream : std::uint64_t {
  kFactor = 1,
  kBetaShock,
  kAlphaShock,
  kNoise,
  kBetaMean,
  kAlphaMean,
  kShares,
};

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  return to_open_unit(cell_hash(seed, stream, a, b, 0));
}

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  const double u1 = to_open_unit(cell_hash(seed, stream, a, b, 1));
  const double u2 = to_open_unit(cell_hash(seed, stream, a, b, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthConfig::validate() const {
  require(n_instruments >= 2, "synth.n_instruments", "must be at least 2");
  require(n_days >= 2, "synth.n_days", "must be at least 2");
  require(kappa > 0.0 && kappa <= 1.0, "synth.kappa", "must lie in (0, 1]");
  require(kappa_alpha > 0.0 && kappa_alpha <= 1.0, "synth.kappa_alpha", "must lie in (0, 1]");
  require(beta_mean_lo <= beta_mean_hi, "synth.beta_mean_lo", "must not exceed beta_mean_hi");
  require(alpha_mean_lo <= alpha_mean_hi, "synth.alpha_mean_lo", "must not exceed alpha_mean_hi");
  require(sigma_beta >= 0.0, "synth.sigma_beta", "must be non-negative");
  require(sigma_alpha >= 0.0, "synth.sigma_alpha", "must be non-negative");
  require(factor_vol >= 0.0, "synth.factor_vol", "must be non-negative");
  require(sigma_eps >= 0.0, "synth.sigma_eps", "must be non-negative");
  require(share_dispersion >= 0.0, "synth.share_dispersion", "must be non-negative");
  require(truth_horizon >= 1, "synth.truth_horizon", "must be positive");
  require(!index_id.empty(), "index_id", "must not be empty");
  try {
    (void)Date::parse(start_date);
  } catch (const std::exception&) {
    throw ConfigError("synth.start_date", "must be YYYY-MM-DD");
  }
}

std::pair<double, double> TruthPanel::horizon(std::size_t i, Step t, Step h) const {
  const auto& a = alpha.at(i);
  if (t < 0 || h < 1 || static_cast<std::size_t>(t + h) >= a.size()) {
    throw MissingDataError("truth horizon (" + std::to_string(t) + ", " + std::to_string(t + h) +
                           "] runs outside the panel");
  }
  double sa = 0.0, sb = 0.0;
  for (Step d = t + 1; d <= t + h; ++d) {
    sa += a[static_cast<std::size_t>(d)];
    sb += beta[i][static_cast<std::size_t>(d)];
  }
  return {sa, sb / static_cast<double>(h)};
}

SyntheticMarket generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_instruments;
  const std::size_t days = cfg.n_days;
  const std::uint64_t seed = cfg.seed;

  SyntheticMarket out;
  out.config = cfg;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%03zu", i);
    ids.emplace_back(buf);
  }
  out.instrument_ids = ids;
  std::vector<std::string> all_ids = ids;
  all_ids.push_back(cfg.index_id);

  TradingCalendar cal = TradingCalendar::weekdays(Date::parse(cfg.start_date), days);
  PricePanel prices(days, all_ids, cfg.index_id);
  IndexWeightPanel weights(days);

  std::vector<double> beta_mean(n), alpha_mean(n), shares(n), beta(n), alpha(n), price(n, 100.0);
  for (std::size_t i = 0; i < n; ++i) {
    beta_mean[i] = cfg.beta_mean_lo + (cfg.beta_mean_hi - cfg.beta_mean_lo) * counter_uniform(seed, kBetaMean, i, 0);
    alpha_mean[i] =
        cfg.alpha_mean_lo + (cfg.alpha_mean_hi - cfg.alpha_mean_lo) * counter_uniform(seed, kAlphaMean, i, 0);
    shares[i] = std::exp(cfg.share_dispersion * counter_normal(seed, kShares, i, 0));
    beta[i] = beta_mean[i];
    alpha[i] = alpha_mean[i];
  }

  TruthPanel& truth = out.truth;
  truth.alpha.assign(n, std::vector<double>(days, 0.0));
  truth.beta.assign(n, std::vector<double>(days, 0.0));
  truth.noise.assign(n, std::vector<double>(days, 0.0));

  auto weights_now = [&]() {
    std::vector<double> w(n);
    if (cfg.weighting == IndexWeighting::equal) {
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
      return w;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += shares[i] * price[i];
    for (std::size_t i = 0; i < n; ++i) w[i] = shares[i] * price[i] / total;
    return w;
  };
  auto store_weights = [&](Step t, const std::vector<double>& w) {
    std::vector<IndexWeightPanel::Entry> row;
    row.reserve(n);
    for (std::size_t i = 0; i < n; ++i) row.emplace_back(i, w[i]);
    weights.set_row(t, std::move(row));
  };

  double level = 100.0;
  for (std::size_t i = 0; i < n; ++i) prices.set(i, 0, price[i]);
  prices.set(n, 0, level);
  std::vector<double> w = weights_now();
  store_weights(0, w);

  std::vector<double> r(n), eps(n);
  for (std::size_t d = 1; d < days; ++d) {
    const double f = cfg.factor_vol * counter_normal(seed, kFactor, 0, d);
    double a = 0.0, b = 0.0, e = 0.0, rm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      beta[i] += cfg.kappa * (beta_mean[i] - beta[i]) + cfg.sigma_beta * counter_normal(seed, kBetaShock, i, d);
      alpha[i] += cfg.kappa_alpha * (alpha_mean[i] - alpha[i]) +
                  cfg.sigma_alpha * counter_normal(seed, kAlphaShock, i, d);
      eps[i] = cfg.sigma_eps * counter_normal(seed, kNoise, i, d);
      r[i] = alpha[i] + beta[i] * f + eps[i];
      if (!(r[i] > -1.0)) {
        throw ValidationError("synthetic return of instrument " + ids[i] + " fell to -100% on day " +
                              std::to_string(d) + "; reduce the volatility settings");
      }
      a += w[i] * alpha[i];
      b += w[i] * beta[i];
      e += w[i] * eps[i];
      rm += w[i] * r[i];
    }
    if (std::abs(b) < 1e-12) throw ValidationError("synthetic index has no factor exposure on day " + std::to_string(d));
    for (std::size_t i = 0; i < n; ++i) {
      truth.beta[i][d] = beta[i] / b;
      truth.alpha[i][d] = alpha[i] - beta[i] * a / b;
      truth.noise[i][d] = eps[i] - beta[i] * e / b;
      price[i] *= 1.0 + r[i];
      prices.set(i, static_cast<Step>(d), price[i]);
    }
    level *= 1.0 + rm;
    prices.set(n, static_cast<Step>(d), level);
    w = weights_now();
    store_weights(static_cast<Step>(d), w);
  }

  out.panels = assemble_panels(std::move(cal), std::move(prices), std::move(weights));
  return out;
}

void write_truth_csv(const std::filesystem::path& path, const SyntheticMarket& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "date,instrument,daily_alpha,daily_beta,daily_noise,horizon_alpha,horizon_beta\n";
  const Step h = m.config.truth_horizon;
  const auto days = static_cast<Step>(m.panels.calendar.size());
  for (Step t = 1; t < days; ++t) {
    const std::string date = m.panels.calendar.date(t).iso();
    for (std::size_t i = 0; i < m.truth.n_instruments(); ++i) {
      const auto k = static_cast<std::size_t>(t);
      out << date << ',' << m.instrument_ids[i] << ',' << format_double(m.truth.alpha[i][k]) << ','
          << format_double(m.truth.beta[i][k]) << ',' << format_double(m.truth.noise[i][k]) << ',';
      if (t + h < days) {
        const auto [ha, hb] = m.truth.horizon(i, t, h);
        out << format_double(ha) << ',' << format_double(hb);
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

TruthPanel read_truth_csv(const std::filesystem::path& path, const MarketPanels& panels) {
  const std::string file = path.string();
  CsvReader in(path);
  auto header = in.next();
  if (!header || header->size() < 5 || (*header)[0] != "date" || (*header)[1] != "instrument" ||
      (*header)[2] != "daily_alpha" || (*header)[3] != "daily_beta" || (*header)[4] != "daily_noise") {
    throw ParseError(file, 1, "expected header date,instrument,daily_alpha,daily_beta,daily_noise,...");
  }
  const std::size_t n = panels.prices.n_series();
  const std::size_t days = panels.calendar.size();
  TruthPanel truth;
  truth.alpha.assign(n, std::vector<double>(days, 0.0));
  truth.beta.assign(n, std::vector<double>(days, 0.0));
  truth.noise.assign(n, std::vector<double>(days, 0.0));
  while (auto row = in.next()) {
    if (row->size() < 5) throw ParseError(file, in.line(), "expected at least 5 fields");
    Date d;
    try {
      d = Date::parse((*row)[0]);
    } catch (const std::exception&) {
      throw ParseError(file, in.line(), "bad date '" + (*row)[0] + "'");
    }
    const auto t = panels.calendar.find(d);
    const auto s = panels.prices.find((*row)[1]);
    if (!t) throw ParseError(file, in.line(), "date " + d.iso() + " is not in the calendar");
    if (!s) throw ParseError(file, in.line(), "unknown instrument '" + (*row)[1] + "'");
    try {
      const auto k = static_cast<std::size_t>(*t);
      truth.alpha[*s][k] = parse_double((*row)[2]);
      truth.beta[*s][k] = parse_double((*row)[3]);
      truth.noise[*s][k] = parse_double((*row)[4]);
    } catch (const std::exception& e) {
      throw ParseError(file, in.line(), e.what());
    }
  }
  return truth;
}

}  // namespace itrack

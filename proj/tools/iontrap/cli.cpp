#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "iontrap/cavity.hpp"
#include "iontrap/constants.hpp"
#include "iontrap/crystal.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/error.hpp"
#include "iontrap/layout_design.hpp"
#include "iontrap/layout_io.hpp"
#include "iontrap/loading.hpp"
#include "iontrap/presets.hpp"
#include "iontrap/spectroscopy.hpp"

#ifndef IONTRAP_VERSION
#define IONTRAP_VERSION "0.0.0"
#endif

namespace iontrap::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using units::angular;
using units::hertz;

namespace {

const std::vector<std::string> kCommands = {"characterize", "axial",   "chain",      "split-stats",
                                            "budget",       "fringe",  "spectrum",   "compensate",
                                            "design",       "presets", "fieldmap"};

// Scenario section holding each command's settings.
std::string section_name(const std::string& command) {
  return command == "split-stats" ? "split" : command;
}

struct Flags {
  std::string scenario;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string layout;
};

struct Artifact {
  std::string stem;
  std::string csv;  // header row plus data
  json data;
};

struct Context {
  std::string command;
  json scenario = json::object();
  json section = json::object();
  Preset preset;
  std::optional<std::uint64_t> seed;
  std::string layout_arg = "reference";
  std::string format = "csv";
  std::optional<fs::path> out_dir;
  std::string hash;
  std::ostream* out = nullptr;
  std::vector<Artifact> artifacts;
  std::vector<std::string> summary;
};

std::string num(double v) { return fmt::format("{:.10g}", v); }

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  std::string csv() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) s += ',';
        s += r[i];
      }
      s += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& r : rows) {
      json o = json::object();
      for (std::size_t i = 0; i < header.size() && i < r.size(); ++i) {
        // Numeric cells go out as numbers.
        char* end = nullptr;
        const double v = std::strtod(r[i].c_str(), &end);
        if (!r[i].empty() && end && *end == '\0') {
          o[header[i]] = v;
        } else {
          o[header[i]] = r[i];
        }
      }
      arr.push_back(o);
    }
    return arr;
  }

  /// Aligned text for terminal summaries.
  std::vector<std::string> text() const {
    std::vector<std::size_t> w(header.size(), 0);
    auto widen = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
    };
    widen(header);
    for (const auto& r : rows) widen(r);
    std::vector<std::string> lines;
    auto fmt_row = [&](const std::vector<std::string>& r) {
      std::string s;
      for (std::size_t i = 0; i < r.size(); ++i) {
        s += fmt::format("{:<{}}", r[i], w[i] + 2);
      }
      while (!s.empty() && s.back() == ' ') s.pop_back();
      return s;
    };
    lines.push_back(fmt_row(header));
    for (const auto& r : rows) lines.push_back(fmt_row(r));
    return lines;
  }
};

void add_table(Context& ctx, const std::string& stem, const Table& t) {
  ctx.artifacts.push_back({stem, t.csv(), t.to_json()});
}

void add_summary_table(Context& ctx, const Table& t) {
  for (auto& l : t.text()) ctx.summary.push_back(std::move(l));
}

// ---------------------------------------------------------------------------
// Scenario access

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

Vec3 get_vec3(const json& j, const char* key, const Vec3& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto v = get_or<std::vector<double>>(j, key, {}, where);
  if (v.size() != 3) throw ConfigError(where + ": '" + std::string(key) + "' needs three numbers");
  return Vec3(v[0], v[1], v[2]);
}

const json& section(const Context& ctx, const std::set<std::string>& allowed) {
  reject_unknown(ctx.section, allowed, "scenario section '" + section_name(ctx.command) + "'");
  return ctx.section;
}

std::uint64_t require_seed(const Context& ctx) {
  if (!ctx.seed) throw ConfigError(ctx.command + " is stochastic and needs a seed (--seed or \"seed\")");
  return *ctx.seed;
}

Preset apply_overrides(const Preset& base, const json& overrides) {
  json doc = json::parse(preset_to_json(base));
  if (!overrides.is_object()) throw ConfigError("preset_overrides must be an object");
  for (const auto& [k, v] : overrides.items()) doc["values"][k] = v;
  return preset_from_json(doc.dump());
}

TrapLayout load_layout(const Context& ctx) {
  if (ctx.layout_arg == "reference") return reference_layout();
  return read_layout(ctx.layout_arg);
}

double budget_eta(const Preset& p) {
  return cooperativity(p.cavity.finesse, p.cavity.waist, p.cavity.wavelength);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_characterize(Context& ctx) {
  const json& s = section(ctx, {"rf_amplitude_V", "rf_frequency_Hz", "dc_voltages_V", "compute_depth"});
  const std::string where = "characterize";
  TrapLayout layout = load_layout(ctx);
  RfDrive drive = layout.drive();
  drive.amplitude = get_or(s, "rf_amplitude_V", drive.amplitude, where);
  drive.angular_frequency = angular(get_or(s, "rf_frequency_Hz", hertz(drive.angular_frequency), where));
  layout = layout.with_drive(drive);
  if (s.contains("dc_voltages_V")) {
    const auto volts = get_or<std::map<std::string, double>>(s, "dc_voltages_V", {}, where);
    for (const auto& [name, v] : volts) layout = layout.with_dc_voltage(name, v);
  }
  CharacterizeOptions opt;
  opt.compute_depth = get_or(s, "compute_depth", true, where);
  const TrapCharacterization t = characterize(layout, ctx.preset.species, opt);

  Table tab{{"quantity", "value", "unit"}, {}};
  tab.add({"height", num(t.height() / units::um), "um"});
  tab.add({"null_height", num(t.null_position.z() / units::um), "um"});
  tab.add({"radial_frequency_low", num(hertz(t.omega_radial_low()) / units::MHz), "MHz"});
  tab.add({"radial_frequency_high", num(hertz(t.omega_radial_high()) / units::MHz), "MHz"});
  tab.add({"axial_frequency", num(hertz(t.omega_axial()) / units::MHz), "MHz"});
  tab.add({"mathieu_q", num(t.mathieu_q), ""});
  tab.add({"mathieu_estimate", num(hertz(t.mathieu_q * t.drive_frequency / (2.0 * std::sqrt(2.0))) / units::MHz), "MHz"});
  if (opt.compute_depth) tab.add({"depth", num(t.depth / units::meV), "meV"});
  tab.add({"drive_frequency", num(hertz(t.drive_frequency) / units::MHz), "MHz"});
  tab.add({"rf_amplitude", num(drive.amplitude), "V"});
  add_table(ctx, "characterize", tab);
  add_summary_table(ctx, tab);
}

void cmd_axial(Context& ctx) {
  const json& s = section(ctx, {"inner_V", "outer_V", "height_m", "periods_each_side", "samples_per_period"});
  const std::string where = "axial";
  const TrapLayout layout = load_layout(ctx);
  const double inner = get_or(s, "inner_V", ctx.preset.periodic_inner, where);
  const double outer = get_or(s, "outer_V", ctx.preset.periodic_outer, where);
  const double height = get_or(s, "height_m", ctx.preset.periodic_height, where);
  PeriodicFitOptions opt;
  opt.periods_each_side = get_or(s, "periods_each_side", opt.periods_each_side, where);
  opt.samples_per_period = get_or(s, "samples_per_period", opt.samples_per_period, where);
  const PeriodicPotential pp = periodic_axial_potential(layout, inner, outer, height, opt);

  Table prof{{"x_um", "potential_mV", "fitted_mV"}, {}};
  for (std::size_t i = 0; i < pp.x.size(); ++i) {
    prof.add({num(pp.x[i] / units::um), num(pp.potential[i] * 1e3), num(pp.fitted[i] * 1e3)});
  }
  add_table(ctx, "axial_profile", prof);

  // Out-of-plane field at the RF null above the well nearest the layout center.
  const Vec3 c = layout.rf_center();
  const double a = pp.model.amplitude;
  const int k = pp.model.well_index(c.x(), a);
  const double xw = pp.model.well_center(k, a);
  NullOptions no;
  no.axial_position = xw;
  const Vec3 null = find_rf_null(layout, no).position;
  auto ez = [&](double vin, double vout) {
    const TrapLayout l = layout.without_dc()
                             .with_role_voltage(ElectrodeRole::periodic_inner, vin)
                             .with_role_voltage(ElectrodeRole::periodic_outer, vout);
    return total_dc(l, null).field.z();
  };
  const double ez_comp = ez(inner, outer), ez_bare = ez(inner, 0.0);

  Table sum{{"quantity", "value", "unit"}, {}};
  sum.add({"period", num(pp.model.period / units::um), "um"});
  sum.add({"amplitude", num(std::abs(pp.model.amplitude) * 1e3), "mV"});
  sum.add({"residual_rms", num(pp.residual_rms * 1e3), "mV"});
  sum.add({"well_position", num(xw / units::um), "um"});
  sum.add({"null_height", num(null.z() / units::um), "um"});
  sum.add({"vertical_field", num(ez_comp), "V/m"});
  sum.add({"vertical_field_outer_grounded", num(ez_bare), "V/m"});
  sum.add({"vertical_field_ratio", num(std::abs(ez_comp) / std::abs(ez_bare)), ""});
  add_table(ctx, "axial_summary", sum);
  add_summary_table(ctx, sum);
  for (const auto& w : pp.warnings) ctx.summary.push_back("warning: " + w);
}

AxialPotentialModel potential_from_json(const json& j, const AxialPotentialModel& fallback,
                                        const std::string& where) {
  reject_unknown(j, {"poly_V_per_m_k", "amplitude_V", "period_m", "phase_rad", "center_m"}, where);
  AxialPotentialModel m = fallback;
  if (j.contains("poly_V_per_m_k")) {
    const auto p = get_or<std::vector<double>>(j, "poly_V_per_m_k", {}, where);
    if (p.size() > 5) throw ConfigError(where + ": at most five polynomial coefficients");
    m.poly.fill(0.0);
    for (std::size_t i = 0; i < p.size(); ++i) m.poly[i] = p[i];
  }
  m.amplitude = get_or(j, "amplitude_V", m.amplitude, where);
  m.period = get_or(j, "period_m", m.period, where);
  m.phase = get_or(j, "phase_rad", m.phase, where);
  m.center = get_or(j, "center_m", m.center, where);
  m.validate();
  return m;
}

void cmd_chain(Context& ctx) {
  const json& s = section(ctx, {"ions", "axial_frequency_Hz", "potential", "tolerance"});
  const std::string where = "chain";
  const int n = get_or(s, "ions", 23, where);
  if (n < 1) throw ConfigError("chain: ions must be at least 1");
  const double w = angular(get_or(s, "axial_frequency_Hz", hertz(ctx.preset.omega_axial), where));
  AxialPotentialModel pot = AxialPotentialModel::harmonic(ctx.preset.species, w);
  if (s.contains("potential")) pot = potential_from_json(s.at("potential"), pot, "chain.potential");
  EquilibriumOptions eo;
  eo.tolerance = get_or(s, "tolerance", eo.tolerance, where);
  const ChainConfig chain = equilibrium(static_cast<std::size_t>(n), pot, ctx.preset.species, eo);
  const NormalModes modes = normal_modes(chain);

  Table pos{{"index", "z_um", "spacing_um"}, {}};
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const double gap = i ? chain.positions[i] - chain.positions[i - 1] : 0.0;
    pos.add({std::to_string(i), num(chain.positions[i] / units::um), i ? num(gap / units::um) : ""});
  }
  add_table(ctx, "chain_positions", pos);
  Table md{{"mode", "frequency_MHz"}, {}};
  for (std::size_t i = 0; i < modes.frequencies.size(); ++i) {
    md.add({std::to_string(i), num(hertz(modes.frequencies[i]) / units::MHz)});
  }
  add_table(ctx, "chain_modes", md);

  Table sum{{"quantity", "value", "unit"}, {}};
  sum.add({"ions", std::to_string(n), ""});
  sum.add({"length", num((chain.positions.back() - chain.positions.front()) / units::um), "um"});
  if (n > 1) {
    const std::size_t mid = chain.size() / 2;
    sum.add({"center_spacing", num((chain.positions[mid] - chain.positions[mid - 1]) / units::um), "um"});
    sum.add({"edge_spacing", num((chain.positions[1] - chain.positions[0]) / units::um), "um"});
  }
  sum.add({"lowest_mode", num(hertz(modes.frequencies.front()) / units::MHz), "MHz"});
  sum.add({"iterations", std::to_string(chain.iterations), ""});
  add_summary_table(ctx, sum);
}

LoadingScenario loading_from_section(const Context& ctx, const json& s) {
  const std::string where = "split";
  LoadingScenario sc;
  sc.species = ctx.preset.species;
  const double w = angular(get_or(s, "axial_frequency_Hz", 10e3, where));
  sc.potential = AxialPotentialModel::harmonic(sc.species, w);
  sc.potential.period = get_or(s, "period_m", ctx.preset.array_period, where);
  sc.potential.phase = get_or(s, "phase_rad", constants::pi, where);
  const double peak = get_or(s, "peak_amplitude_V", 0.02, where);
  sc.ramp.keyframes = {0.0, peak};
  sc.ramp.steps_per_segment = get_or(s, "steps_per_segment", 200, where);
  sc.mean_total = get_or(s, "mean_total", 23.0, where);
  const auto load = get_or<std::string>(s, "load", "poisson", where);
  if (load == "poisson") {
    sc.load = LoadMode::poisson;
  } else if (load == "fixed") {
    sc.load = LoadMode::fixed;
  } else {
    throw ConfigError("split: load must be 'poisson' or 'fixed'");
  }
  sc.purity = get_or(s, "purity", ctx.preset.isotopic_purity, where);
  sc.trials = get_or<std::size_t>(s, "trials", 10000, where);
  const auto assign = get_or<std::string>(s, "assignment", "split", where);
  if (assign == "split") {
    sc.assignment = SiteAssignment::split;
  } else if (assign == "iid") {
    sc.assignment = SiteAssignment::iid;
  } else {
    throw ConfigError("split: assignment must be 'split' or 'iid'");
  }
  sc.iid_sites = get_or(s, "iid_sites", 4, where);
  sc.threads = get_or(s, "threads", 0u, where);
  sc.seed = require_seed(ctx);
  return sc;
}

void cmd_split_stats(Context& ctx) {
  const json& s = section(ctx, {"mean_total", "load", "purity", "trials", "axial_frequency_Hz",
                                "period_m", "phase_rad", "peak_amplitude_V", "steps_per_segment",
                                "assignment", "iid_sites", "threads"});
  const LoadingScenario sc = loading_from_section(ctx, s);
  const LoadingStats st = loading_monte_carlo(sc);

  Table stats{{"site", "mean", "variance", "fano"}, {}};
  Table hist{{"site", "count", "trials"}, {}};
  for (const auto& site : st.sites) {
    stats.add({std::to_string(site.site), num(site.mean), num(site.variance),
               site.fano ? num(*site.fano) : ""});
    for (std::size_t k = 0; k < site.histogram.size(); ++k) {
      hist.add({std::to_string(site.site), std::to_string(k), std::to_string(site.histogram[k])});
    }
  }
  Table totals{{"ions", "trials"}, {}};
  for (std::size_t k = 0; k < st.total_histogram.size(); ++k) {
    totals.add({std::to_string(k), std::to_string(st.total_histogram[k])});
  }
  add_table(ctx, "split_stats", stats);
  add_table(ctx, "split_histogram", hist);
  add_table(ctx, "split_totals", totals);
  add_summary_table(ctx, stats);
  if (auto b = st.best_fano()) ctx.summary.push_back("best-site fano: " + num(*b));
  if (auto w = st.worst_fano()) ctx.summary.push_back("worst-site fano: " + num(*w));
}

PhotonBudget budget_for(const Preset& p, double localization) {
  return photon_budget(p.species, p.probe, p.cavity, budget_eta(p), localization);
}

void cmd_budget(Context& ctx) {
  const json& s = section(ctx, {"localization", "sweep"});
  const std::string where = "budget";
  const double loc = get_or(s, "localization", ctx.preset.localization, where);
  const PhotonBudget b = budget_for(ctx.preset, loc);

  Table tab{{"factor", "value", "running"}, {}};
  for (const auto& f : b.factors) tab.add({f.name, num(f.value), num(f.running)});
  tab.add({"total_counts_per_s", num(b.total), num(b.total)});
  add_table(ctx, "budget", tab);
  add_summary_table(ctx, tab);

  if (s.contains("sweep")) {
    const json& sw = s.at("sweep");
    reject_unknown(sw, {"parameter", "from", "to", "steps"}, "budget.sweep");
    const auto param = get_or<std::string>(sw, "parameter", "", "budget.sweep");
    const double from = get_or(sw, "from", 0.0, "budget.sweep");
    const double to = get_or(sw, "to", 0.0, "budget.sweep");
    const int steps = get_or(sw, "steps", 11, "budget.sweep");
    if (param.empty() || steps < 2) throw ConfigError("budget.sweep needs a parameter and steps >= 2");
    Table sweep{{param, "total_counts_per_s"}, {}};
    for (int i = 0; i < steps; ++i) {
      const double v = from + (to - from) * i / (steps - 1);
      const Preset p = apply_overrides(ctx.preset, json{{param, v}});
      sweep.add({num(v), num(budget_for(p, loc).total)});
    }
    add_table(ctx, "budget_sweep", sweep);
  }
}

void cmd_fringe(Context& ctx) {
  const json& s = section(ctx, {"visibility", "base_rate_per_s", "span_m", "points", "noise", "dwell_s",
                                "axial_frequency_Hz"});
  const std::string where = "fringe";
  const Preset& p = ctx.preset;
  const double lambda = p.cavity.wavelength;
  const double v = get_or(s, "visibility", p.fringe_visibility, where);
  const double base = get_or(s, "base_rate_per_s", budget_for(p, p.localization).total, where);
  const double span = get_or(s, "span_m", 2.0 * lambda, where);
  const int points = get_or(s, "points", 201, where);
  const bool noise = get_or(s, "noise", false, where);
  const double dwell = get_or(s, "dwell_s", 1.0, where);
  const double w_ax = angular(get_or(s, "axial_frequency_Hz", hertz(p.omega_axial), where));
  if (points < 4) throw ConfigError("fringe: points must be at least 4");

  std::vector<double> z(points);
  for (int i = 0; i < points; ++i) z[i] = span * i / (points - 1);
  std::vector<double> rate = fringe_scan(z, v, base, lambda);
  if (noise) {
    if (!(dwell > 0.0)) throw ConfigError("fringe: dwell_s must be positive");
    std::mt19937_64 rng(require_seed(ctx));
    for (double& r : rate) {
      std::poisson_distribution<long long> pd(r * dwell);
      r = static_cast<double>(pd(rng)) / dwell;
    }
  }
  Table scan{{"z_nm", "rate_per_s"}, {}};
  for (int i = 0; i < points; ++i) scan.add({num(z[i] / units::nm), num(rate[i])});
  add_table(ctx, "fringe", scan);

  const FringeFit fit = fit_fringe(z, rate, lambda);
  const ThermometryResult th = visibility_to_temperature(std::clamp(fit.visibility, 1e-12, 1.0), w_ax,
                                                         p.species, lambda);
  Table sum{{"quantity", "value", "unit"}, {}};
  sum.add({"period", num(lattice_geometry(lambda, 0.0).period / units::nm), "nm"});
  sum.add({"fitted_visibility", num(fit.visibility), ""});
  sum.add({"visibility_error", num(fit.visibility_error), ""});
  sum.add({"peak_valley_ratio", num(fringe_peak_valley(std::min(fit.visibility, 1.0 - 1e-12))), ""});
  sum.add({"sigma", num(th.sigma / units::nm), "nm"});
  sum.add({"temperature", num(th.temperature * 1e3), "mK"});
  sum.add({"doppler_temperature", num(th.doppler_temperature * 1e3), "mK"});
  sum.add({"temperature_over_doppler", num(th.doppler_ratio), ""});
  add_table(ctx, "fringe_fit", sum);
  add_summary_table(ctx, sum);
}

TrapCharacterization preset_trap(const Preset& p) {
  return TrapCharacterization::ideal_linear(p.omega_radial, p.mathieu_q, p.drive.angular_frequency,
                                            p.omega_axial);
}

void cmd_spectrum(Context& ctx) {
  const json& s = section(ctx, {"beta", "stray_field_V_m", "beam_direction", "span_MHz", "step_MHz",
                                "n_max", "constant_envelope", "peak_rate_per_s"});
  const std::string where = "spectrum";
  const Preset& p = ctx.preset;
  const double omega = p.drive.angular_frequency;
  const Vec3 dir = get_vec3(s, "beam_direction", Vec3::UnitY(), where).normalized();
  double beta = 0.0;
  if (s.contains("beta")) {
    beta = get_or(s, "beta", 0.0, where);
  } else {
    const double e = get_or(s, "stray_field_V_m", p.stray_field, where);
    beta = micromotion_from_field(e * dir, preset_trap(p), p.species, p.species.wavenumber(), dir).beta;
  }
  SpectrumOptions so;
  so.n_max = get_or(s, "n_max", so.n_max, where);
  so.constant_envelope = get_or(s, "constant_envelope", false, where);
  so.resolution = p.resolution;
  so.peak_rate = get_or(s, "peak_rate_per_s", budget_for(p, p.localization).total, where);
  const double step = angular(get_or(s, "step_MHz", hertz(omega) / units::MHz / 100.0, where) * units::MHz);
  const double span = angular(get_or(s, "span_MHz", hertz(omega) / units::MHz * (so.n_max + 2), where) * units::MHz);
  const SpectrumScan scan = synthesize_spectrum(beta, p.probe, p.cavity, p.species, omega,
                                                detuning_grid(span, step), so);
  const SidebandFit fit = fit_sidebands(scan, omega);

  Table sp{{"detuning_MHz", "rate"}, {}};
  for (std::size_t i = 0; i < scan.detuning.size(); ++i) {
    sp.add({num(hertz(scan.detuning[i]) / units::MHz), num(scan.intensity[i])});
  }
  add_table(ctx, "spectrum", sp);
  Table comp{{"n", "weight", "center_MHz", "envelope"}, {}};
  for (const auto& c : scan.components) {
    comp.add({std::to_string(c.order), num(c.weight), num(hertz(c.center) / units::MHz), num(c.envelope)});
  }
  add_table(ctx, "spectrum_components", comp);

  json report = {{"beta_input", beta},
                 {"beta_est", fit.beta},
                 {"ratio", fit.ratio},
                 {"residual_norm", fit.residual_norm},
                 {"carrier_area", fit.carrier_area},
                 {"carrier_fwhm_MHz", hertz(peak_fwhm(scan, 0.0)) / units::MHz},
                 {"bessel_sum", scan.bessel_sum},
                 {"n_max", scan.n_max}};
  json areas = json::object();
  for (const auto& [n, a] : fit.sideband_areas) areas[std::to_string(n)] = a;
  report["sideband_areas"] = areas;
  // The fit report is JSON in both formats.
  ctx.artifacts.push_back({"spectrum_fit", "", report});

  Table sum{{"quantity", "value", "unit"}, {}};
  sum.add({"beta_input", num(beta), ""});
  sum.add({"beta_est", num(fit.beta), ""});
  sum.add({"carrier_fwhm", num(hertz(peak_fwhm(scan, 0.0)) / units::MHz), "MHz"});
  sum.add({"resolution", num(hertz(scan.resolution) / units::MHz), "MHz"});
  sum.add({"n_max", std::to_string(scan.n_max), ""});
  add_summary_table(ctx, sum);
}

void cmd_compensate(Context& ctx) {
  const json& s = section(ctx, {"stray_field_V_m", "box_min_V_m", "box_max_V_m", "probe_directions",
                                "tolerance_V_m"});
  const std::string where = "compensate";
  const Preset& p = ctx.preset;
  CompensationOptions co;
  const Vec3 stray = get_vec3(s, "stray_field_V_m", Vec3(0.0, p.stray_field, 0.0), where);
  co.box_min = get_vec3(s, "box_min_V_m", co.box_min, where);
  co.box_max = get_vec3(s, "box_max_V_m", co.box_max, where);
  co.field_tolerance = get_or(s, "tolerance_V_m", co.field_tolerance, where);
  if (s.contains("probe_directions")) {
    const auto dirs = get_or<std::vector<std::vector<double>>>(s, "probe_directions", {}, where);
    co.probe_directions.clear();
    for (const auto& d : dirs) {
      if (d.size() != 3) throw ConfigError("compensate: probe directions need three numbers");
      co.probe_directions.push_back(Vec3(d[0], d[1], d[2]).normalized());
    }
  }
  co.spectrum.resolution = p.resolution;
  const CompensationResult r = compensate(stray, preset_trap(p), p.species, p.probe, p.cavity, co);

  Table tab{{"quantity", "value", "unit"}, {}};
  tab.add({"stray_x", num(stray.x()), "V/m"});
  tab.add({"stray_y", num(stray.y()), "V/m"});
  tab.add({"stray_z", num(stray.z()), "V/m"});
  tab.add({"compensation_x", num(r.field.x()), "V/m"});
  tab.add({"compensation_y", num(r.field.y()), "V/m"});
  tab.add({"compensation_z", num(r.field.z()), "V/m"});
  tab.add({"residual_beta", num(r.residual_beta), ""});
  tab.add({"sweeps", std::to_string(r.sweeps), ""});
  tab.add({"evaluations", std::to_string(r.evaluations), ""});
  add_table(ctx, "compensate", tab);
  add_summary_table(ctx, tab);
}

void cmd_design(Context& ctx) {
  const json& s = section(ctx, {"height_m", "mathieu_q", "radial_frequency_Hz", "depth_eV",
                                "depth_weight", "periodic_ratio", "tolerance"});
  const std::string where = "design";
  const Preset& p = ctx.preset;
  DesignTargets t;
  t.height = get_or(s, "height_m", p.trap_height, where);
  t.mathieu_q = get_or(s, "mathieu_q", p.mathieu_q, where);
  t.omega_radial = angular(get_or(s, "radial_frequency_Hz", hertz(p.omega_radial), where));
  t.depth = get_or(s, "depth_eV", p.trap_depth, where);
  t.depth_weight = get_or(s, "depth_weight", t.depth_weight, where);
  t.periodic_ratio = get_or(s, "periodic_ratio", p.periodic_outer / p.periodic_inner, where);
  DesignOptions o;
  o.tolerance = get_or(s, "tolerance", o.tolerance, where);
  const DesignResult r = design_solve(t, p.drive, p.species, o);

  Table tab{{"quantity", "value", "unit"}, {}};
  tab.add({"center_width", num(r.geometry.center_width / units::um), "um"});
  tab.add({"rf_width", num(r.geometry.rf_width / units::um), "um"});
  tab.add({"inner_duty", num(r.geometry.inner_duty), ""});
  tab.add({"height", num(r.achieved.height() / units::um), "um"});
  tab.add({"mathieu_q", num(r.achieved.mathieu_q), ""});
  tab.add({"radial_frequency", num(hertz(r.achieved.omega_radial_low()) / units::MHz), "MHz"});
  tab.add({"depth", num(r.achieved.depth / units::meV), "meV"});
  tab.add({"vertical_field_ratio", num(r.vertical_field_ratio), ""});
  add_table(ctx, "design", tab);
  add_summary_table(ctx, tab);
  if (ctx.out_dir) {
    write_layout(*ctx.out_dir / "reference_layout.json", r.layout, r.geometry);
    ctx.summary.push_back("layout written to " + (*ctx.out_dir / "reference_layout.json").string());
  }
}

void cmd_presets(Context& ctx) {
  section(ctx, {});
  if (ctx.format == "json") {
    ctx.artifacts.push_back({"preset", "", json::parse(preset_to_json(ctx.preset))});
    return;
  }
  Table names{{"preset", "description"}, {}};
  for (const auto& n : list_presets()) names.add({n, get_preset(n).description});
  add_summary_table(ctx, names);
  const json doc = json::parse(preset_to_json(ctx.preset));
  Table vals{{"key", "value", "note"}, {}};
  for (const auto& [k, v] : doc.at("values").items()) {
    const auto it = ctx.preset.notes.find(k);
    vals.add({k, v.is_number() ? num(v.get<double>()) : v.dump(),
              it == ctx.preset.notes.end() ? "" : "\"" + it->second + "\""});
  }
  ctx.summary.push_back("");
  add_summary_table(ctx, vals);
  add_table(ctx, "preset_values", vals);
}

void cmd_fieldmap(Context& ctx) {
  const json& s = section(ctx, {"x_m", "y_min_m", "y_max_m", "z_min_m", "z_max_m", "ny", "nz"});
  const std::string where = "fieldmap";
  const TrapLayout layout = load_layout(ctx);
  const Vec3 c = layout.rf_center();
  const double w = layout.rf_half_width();
  const double x = get_or(s, "x_m", c.x(), where);
  const double y0 = get_or(s, "y_min_m", c.y() - w, where), y1 = get_or(s, "y_max_m", c.y() + w, where);
  const double z0 = get_or(s, "z_min_m", 0.2 * w, where), z1 = get_or(s, "z_max_m", 2.0 * w, where);
  const int ny = get_or(s, "ny", 41, where), nz = get_or(s, "nz", 41, where);
  if (ny < 2 || nz < 2) throw ConfigError("fieldmap: ny and nz must be at least 2");
  std::vector<Vec3> pts;
  for (int j = 0; j < nz; ++j) {
    for (int i = 0; i < ny; ++i) {
      pts.emplace_back(x, y0 + (y1 - y0) * i / (ny - 1), z0 + (z1 - z0) * j / (nz - 1));
    }
  }
  std::ostringstream os;
  write_field_map_csv(os, layout, ctx.preset.species, pts);
  json data = json::array();
  for (const Vec3& p : pts) {
    const FieldPoint f = evaluate(layout, ctx.preset.species, p);
    data.push_back({{"x", p.x()}, {"y", p.y()}, {"z", p.z()}, {"phi_dc", f.dc_potential},
                    {"Ex", f.dc_field.x()}, {"Ey", f.dc_field.y()}, {"Ez", f.dc_field.z()},
                    {"phips_eV", f.pseudopotential}});
  }
  ctx.artifacts.push_back({"fieldmap", os.str(), data});
  ctx.summary.push_back(fmt::format("{} points at x = {} um", pts.size(), num(x / units::um)));
}

const std::map<std::string, std::function<void(Context&)>>& handlers() {
  static const std::map<std::string, std::function<void(Context&)>> h = {
      {"characterize", cmd_characterize}, {"axial", cmd_axial},
      {"chain", cmd_chain},               {"split-stats", cmd_split_stats},
      {"budget", cmd_budget},             {"fringe", cmd_fringe},
      {"spectrum", cmd_spectrum},         {"compensate", cmd_compensate},
      {"design", cmd_design},             {"presets", cmd_presets},
      {"fieldmap", cmd_fieldmap},
  };
  return h;
}

// ---------------------------------------------------------------------------
// Driver

json read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario '" + path + "': invalid JSON: " + e.what());
  }
  std::set<std::string> allowed = {"command", "preset", "seed", "layout", "preset_overrides"};
  for (const auto& c : kCommands) allowed.insert(section_name(c));
  reject_unknown(doc, allowed, "scenario");
  if (!doc.contains("command") || !doc.at("command").is_string()) {
    throw ConfigError("scenario: missing string key 'command'");
  }
  return doc;
}

Context build_context(const std::string& command, const Flags& f, std::ostream& out) {
  Context ctx;
  ctx.command = command;
  ctx.out = &out;
  ctx.format = f.format;
  std::string preset_name = "paper-2012";
  if (!f.scenario.empty()) {
    ctx.scenario = read_scenario(f.scenario);
    const auto sc = ctx.scenario.at("command").get<std::string>();
    if (sc != command) {
      throw ConfigError("scenario is for command '" + sc + "', not '" + command + "'");
    }
    preset_name = get_or<std::string>(ctx.scenario, "preset", preset_name, "scenario");
    if (ctx.scenario.contains("seed")) {
      ctx.seed = get_or<std::uint64_t>(ctx.scenario, "seed", 0, "scenario");
    }
    ctx.layout_arg = get_or<std::string>(ctx.scenario, "layout", ctx.layout_arg, "scenario");
    const std::string sec = section_name(command);
    if (ctx.scenario.contains(sec)) ctx.section = ctx.scenario.at(sec);
  }
  if (!f.preset.empty()) preset_name = f.preset;
  if (f.seed) ctx.seed = f.seed;
  if (!f.layout.empty()) ctx.layout_arg = f.layout;
  ctx.preset = get_preset(preset_name);
  if (ctx.scenario.contains("preset_overrides")) {
    ctx.preset = apply_overrides(ctx.preset, ctx.scenario.at("preset_overrides"));
  }
  if (!f.out.empty()) ctx.out_dir = fs::path(f.out);

  const json canon = {{"command", command},
                      {"scenario", ctx.scenario},
                      {"preset", preset_name},
                      {"layout", ctx.layout_arg},
                      {"seed", ctx.seed ? json(*ctx.seed) : json(nullptr)}};
  ctx.hash = fnv1a_hex(canon.dump());
  return ctx;
}

json metadata(const Context& ctx, const std::string& artifact) {
  return {{"artifact", artifact},
          {"command", ctx.command},
          {"scenario_hash", "fnv1a64:" + ctx.hash},
          {"seed", ctx.seed ? json(*ctx.seed) : json(nullptr)},
          {"preset", ctx.preset.name},
          {"version", IONTRAP_VERSION}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw ConfigError("cannot write '" + path.string() + "'");
  o << text;
}

void emit(Context& ctx) {
  if (ctx.out_dir) {
    std::error_code ec;
    fs::create_directories(*ctx.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + ctx.out_dir->string() + "'");
    for (const auto& a : ctx.artifacts) {
      if (ctx.format == "csv" && !a.csv.empty()) {
        const std::string name = a.stem + ".csv";
        write_text(*ctx.out_dir / name, a.csv);
        write_text(*ctx.out_dir / (name + ".meta.json"), metadata(ctx, name).dump(2) + "\n");
      } else {
        const std::string name = a.stem + ".json";
        const json doc = {{"meta", metadata(ctx, name)}, {"data", a.data}};
        write_text(*ctx.out_dir / name, doc.dump(2) + "\n");
      }
    }
  }
  if (ctx.format == "json" && !ctx.out_dir) {
    json all = json::object();
    for (const auto& a : ctx.artifacts) all[a.stem] = a.data;
    *ctx.out << json{{"meta", metadata(ctx, "stdout")}, {"artifacts", all}}.dump(2) << "\n";
    return;
  }
  for (const auto& l : ctx.summary) *ctx.out << l << "\n";
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--scenario", f.scenario, "Scenario file (JSON)");
  sub->add_option("--preset", f.preset, "Parameter preset name");
  sub->add_option("--seed", f.seed, "Random seed for stochastic commands");
  sub->add_option("--out", f.out, "Directory for CSV/JSON artifacts");
  sub->add_option("--format", f.format, "Artifact format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--layout", f.layout, "Layout file, or 'reference' for the shipped layout");
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar ion-trap array and cavity modelling tool", "iontrap"};
  app.set_version_flag("--version", IONTRAP_VERSION);
  app.require_subcommand(1);
  Flags flags;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> help = {
      {"characterize", "RF null, secular frequencies, Mathieu q and depth of a layout"},
      {"axial", "Axial potential of the periodic electrodes with a fitted model"},
      {"chain", "Equilibrium positions and normal modes of an ion chain"},
      {"split-stats", "Monte Carlo of loading and splitting a chain over the array"},
      {"budget", "Itemized photon detection budget"},
      {"fringe", "Standing-wave fluorescence scan and thermometry"},
      {"spectrum", "Micromotion sideband spectrum with fit"},
      {"compensate", "Stray-field compensation search"},
      {"design", "Fit layout dimensions to trap targets and write the layout"},
      {"presets", "List presets and their values"},
      {"fieldmap", "Potential, field and pseudopotential on a transverse grid"},
  };
  for (const auto& c : kCommands) {
    CLI::App* s = app.add_subcommand(c, help.at(c));
    add_common(s, flags);
    subs[c] = s;
  }
  CLI::App* run_sub = app.add_subcommand("run", "Run the command named in a scenario file");
  add_common(run_sub, flags);

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  std::string command;
  for (const auto& [name, s] : subs) {
    if (s->parsed()) command = name;
  }
  try {
    if (run_sub->parsed()) {
      if (flags.scenario.empty()) throw ConfigError("run needs --scenario");
      command = read_scenario(flags.scenario).at("command").get<std::string>();
      if (!handlers().count(command)) throw ConfigError("scenario names unknown command '" + command + "'");
    }
    Context ctx = build_context(command, flags, out);
    handlers().at(command)(ctx);
    emit(ctx);
    return kOk;
  } catch (const ConfigError& e) {
    err << "iontrap " << command << ": configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ConvergenceError& e) {
    err << "iontrap " << command << ": did not converge: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const Error& e) {
    err << "iontrap " << command << ": physics error: " << e.what() << "\n";
    return kPhysicsError;
  } catch (const std::exception& e) {
    err << "iontrap " << command << ": " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace iontrap::cli

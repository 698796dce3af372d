#include "iontrap/loading.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "iontrap/error.hpp"

namespace iontrap {

namespace {

struct Trial {
  std::vector<bool> bright;  // per ion, left to right
  std::vector<int> iid_site;  // per bright ion, iid mode only
};

std::mt19937_64 trial_engine(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

Trial draw_trial(const LoadingScenario& sc, std::uint64_t t) {
  auto rng = trial_engine(sc.seed, t);
  std::size_t n = 0;
  if (sc.load == LoadMode::fixed) {
    n = static_cast<std::size_t>(std::llround(sc.mean_total));
  } else if (sc.mean_total > 0.0) {
    n = static_cast<std::size_t>(std::poisson_distribution<long long>(sc.mean_total)(rng));
  }
  Trial tr;
  tr.bright.resize(n);
  std::bernoulli_distribution is_bright(sc.purity);
  for (std::size_t i = 0; i < n; ++i) tr.bright[i] = is_bright(rng);
  if (sc.assignment == SiteAssignment::iid) {
    std::uniform_int_distribution<int> pick(0, sc.iid_sites - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (tr.bright[i]) tr.iid_site.push_back(pick(rng));
    }
  }
  return tr;
}

// Site assignment of every ion for each chain length. Mass and charge do not
// depend on the isotope label here, so the split depends on N only.
std::map<std::size_t, std::vector<int>> split_by_size(const LoadingScenario& sc,
                                                      const std::set<std::size_t>& sizes) {
  const std::vector<std::size_t> ns(sizes.begin(), sizes.end());
  std::vector<std::vector<int>> sites(ns.size());
  std::vector<std::exception_ptr> errors(ns.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < ns.size(); i = next++) {
      try {
        const ChainConfig chain = equilibrium(ns[i], sc.potential, sc.species, sc.equilibrium);
        sites[i] = split(chain, sc.ramp, sc.equilibrium).sites;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned threads = sc.threads ? sc.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, ns.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::map<std::size_t, std::vector<int>> out;
  for (std::size_t i = 0; i < ns.size(); ++i) out.emplace(ns[i], std::move(sites[i]));
  return out;
}

std::optional<double> fano_or_empty(double mean, double variance) {
  if (!(mean > 0.0)) return std::nullopt;
  return variance / mean;
}

}  // namespace

void LoadingScenario::validate() const {
  species.validate();
  potential.validate();
  if (!(purity >= 0.0 && purity <= 1.0)) throw ConfigError("purity must lie in [0, 1]");
  if (trials < 1) throw ConfigError("trial count must be at least 1");
  if (!(mean_total >= 0.0) || !std::isfinite(mean_total)) {
    throw ConfigError("mean ion number must be finite and non-negative");
  }
  if (assignment == SiteAssignment::iid && iid_sites < 1) {
    throw ConfigError("iid control needs at least one site");
  }
  if (assignment == SiteAssignment::split) {
    ramp.steps();
    if (std::abs(ramp.keyframes.front() - potential.amplitude) >
        1e-12 * std::max(std::abs(ramp.peak()), 1e-30)) {
      throw ConfigError("ramp must start at the potential's periodic amplitude");
    }
  }
}

std::optional<double> LoadingStats::best_fano() const {
  std::optional<double> best;
  for (const auto& s : sites) {
    if (s.fano && (!best || *s.fano < *best)) best = s.fano;
  }
  return best;
}

std::optional<double> LoadingStats::worst_fano() const {
  std::optional<double> worst;
  for (const auto& s : sites) {
    if (s.fano && (!worst || *s.fano > *worst)) worst = s.fano;
  }
  return worst;
}

const SiteStats* LoadingStats::site(int index) const {
  for (const auto& s : sites) {
    if (s.site == index) return &s;
  }
  return nullptr;
}

LoadingStats loading_monte_carlo(const LoadingScenario& sc) {
  sc.validate();
  std::vector<Trial> trials;
  trials.reserve(sc.trials);
  std::set<std::size_t> sizes;
  for (std::size_t t = 0; t < sc.trials; ++t) {
    trials.push_back(draw_trial(sc, t));
    if (!trials.back().bright.empty()) sizes.insert(trials.back().bright.size());
  }

  std::map<std::size_t, std::vector<int>> assignment;
  if (sc.assignment == SiteAssignment::split && !sizes.empty()) assignment = split_by_size(sc, sizes);

  // counts[site][trial]
  std::set<int> site_ids;
  if (sc.assignment == SiteAssignment::iid) {
    for (int s = 0; s < sc.iid_sites; ++s) site_ids.insert(s);
  } else {
    for (const auto& [n, sites] : assignment) site_ids.insert(sites.begin(), sites.end());
  }
  std::map<int, std::vector<std::uint64_t>> counts;
  for (int s : site_ids) counts[s].assign(sc.trials, 0);

  LoadingStats out;
  out.trials = sc.trials;
  for (std::size_t t = 0; t < sc.trials; ++t) {
    const Trial& tr = trials[t];
    const std::size_t n = tr.bright.size();
    if (out.total_histogram.size() <= n) out.total_histogram.resize(n + 1, 0);
    ++out.total_histogram[n];
    if (sc.assignment == SiteAssignment::iid) {
      for (int s : tr.iid_site) ++counts[s][t];
    } else if (n > 0) {
      const auto& sites = assignment.at(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (tr.bright[i]) ++counts[sites[i]][t];
      }
    }
  }

  for (const auto& [s, c] : counts) {
    SiteStats st;
    st.site = s;
    const std::uint64_t kmax = c.empty() ? 0 : *std::max_element(c.begin(), c.end());
    st.histogram.assign(kmax + 1, 0);
    for (std::uint64_t k : c) ++st.histogram[k];
    double sum = 0.0;
    for (std::uint64_t k : c) sum += static_cast<double>(k);
    st.mean = sum / static_cast<double>(c.size());
    double ss = 0.0;
    for (std::uint64_t k : c) ss += (k - st.mean) * (k - st.mean);
    st.variance = c.size() > 1 ? ss / static_cast<double>(c.size() - 1) : 0.0;
    st.fano = fano_or_empty(st.mean, st.variance);
    out.sites.push_back(std::move(st));
  }
  return out;
}

double fano(std::span<const double> samples) {
  if (samples.size() < 2) throw DomainError("Fano factor needs at least two samples");
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double mean = sum / static_cast<double>(samples.size());
  if (mean == 0.0) throw DomainError("Fano factor undefined for zero mean");
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(samples.size() - 1) / mean;
}

double fano_from_histogram(std::span<const std::uint64_t> histogram) {
  std::uint64_t n = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < histogram.size(); ++k) {
    n += histogram[k];
    sum += static_cast<double>(k) * static_cast<double>(histogram[k]);
  }
  if (n < 2) throw DomainError("Fano factor needs at least two samples");
  const double mean = sum / static_cast<double>(n);
  if (mean == 0.0) throw DomainError("Fano factor undefined for zero mean");
  double ss = 0.0;
  for (std::size_t k = 0; k < histogram.size(); ++k) {
    const double d = static_cast<double>(k) - mean;
    ss += d * d * static_cast<double>(histogram[k]);
  }
  return ss / static_cast<double>(n - 1) / mean;
}

}  // namespace iontrap

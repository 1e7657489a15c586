#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sagwave/detector.hpp"
#include "sagwave/grid.hpp"
#include "sagwave/simulator.hpp"

namespace sagwave {

struct ProbabilityMap {
  GridSpec spec;
  std::vector<double> probs;        // in [0, 1], multiples of 1/k where valid
  std::vector<std::uint8_t> valid;  // valid iff valid in every replication
  std::size_t k = 0;

  double at(std::size_t row, std::size_t col) const { return probs[row * spec.n_t + col]; }
};

// Elementwise mean of binary indicators; validity is the conjunction of
// per-replication validity.
inline ProbabilityMap probability_map(const std::vector<BinaryMap>& binaries) {
  if (binaries.empty()) throw std::invalid_argument("incompatible replications: empty list");
  for (const auto& b : binaries)
    if (!(b.spec == binaries.front().spec))
      throw std::invalid_argument("incompatible replications");

  ProbabilityMap pm;
  pm.spec = binaries.front().spec;
  pm.k = binaries.size();
  const std::size_t cells = pm.spec.cells();
  pm.probs.assign(cells, 0.0);
  pm.valid.assign(cells, 1);
  std::vector<std::uint32_t> counts(cells, 0);
  for (const auto& b : binaries) {
    for (std::size_t i = 0; i < cells; ++i) {
      if (!b.valid[i]) pm.valid[i] = 0;
      counts[i] += b.indicators[i];
    }
  }
  for (std::size_t i = 0; i < cells; ++i) {
    if (pm.valid[i]) pm.probs[i] = static_cast<double>(counts[i]) / static_cast<double>(pm.k);
    else pm.probs[i] = 0.0;
  }
  return pm;
}

// Fraction of valid cells with lo < p < hi (strict on both sides).
inline double uncertainty_fraction(const ProbabilityMap& pm, double lo = 0.25, double hi = 0.75) {
  if (lo < 0.0 || lo >= hi || hi > 1.0) throw std::invalid_argument("invalid uncertainty band");
  std::size_t valid_cells = 0, in_band = 0;
  for (std::size_t i = 0; i < pm.probs.size(); ++i) {
    if (!pm.valid[i]) continue;
    ++valid_cells;
    if (pm.probs[i] > lo && pm.probs[i] < hi) ++in_band;
  }
  if (valid_cells == 0) throw std::runtime_error("empty map");
  return static_cast<double>(in_band) / static_cast<double>(valid_cells);
}

struct BootstrapReport {
  std::size_t k = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> replication_seeds;
  ProbabilityMap probability;
  double uncertainty = 0.0;     // NaN when no cell is valid in all replications
  std::size_t clamp_warnings = 0;
  std::size_t deferred_entries = 0;
  double wall_seconds = 0.0;
  std::size_t workers = 1;
};

// One replication of the pipeline: sample -> simulate -> grid -> detect.
inline BinaryMap replication_binary_map(const Scenario& scenario, const GridSpec& grid_spec,
                                        const DetectorConfig& config, std::uint64_t master_seed,
                                        std::uint64_t index, std::size_t* clamp_warnings = nullptr,
                                        std::size_t* deferred = nullptr) {
  const Scenario sampled = sample_replication(scenario, master_seed, index);
  const ReplicationResult run = run_replication(sampled, derive_stream_seed(master_seed, index));
  const TimeSpaceGrid grid = aggregate_trajectories(run.trajectories, grid_spec);
  const ActivationMap activation = kernel_activation(grid, config);
  if (clamp_warnings) *clamp_warnings = activation.clamp_warnings;
  if (deferred) *deferred = run.deferred_entries;
  return classify(activation, config.epsilon);
}

// Runs k replications (concurrently up to `workers`), aggregates the binary
// maps into a probability map and computes U. Results reduce by replication
// index, so output is independent of the execution schedule.
inline BootstrapReport run_bootstrap(const Scenario& scenario, const GridSpec& grid_spec,
                                     const DetectorConfig& config, std::size_t k,
                                     std::uint64_t master_seed, std::size_t workers = 1,
                                     double u_lo = 0.25, double u_hi = 0.75) {
  if (k < 1) throw std::invalid_argument("replication count must be >= 1");
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<BinaryMap> binaries(k);
  std::vector<std::size_t> clamp_counts(k, 0), deferred_counts(k, 0);
  std::atomic<std::size_t> next_index{0};
  std::mutex error_mutex;
  std::string first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next_index.fetch_add(1);
      if (i >= k) return;
      try {
        binaries[i] = replication_binary_map(scenario, grid_spec, config, master_seed, i,
                                             &clamp_counts[i], &deferred_counts[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty())
          first_error = "replication " + std::to_string(i) + ": " + e.what();
        return;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, k));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);

  BootstrapReport report;
  report.k = k;
  report.master_seed = master_seed;
  report.workers = n_threads;
  for (std::size_t i = 0; i < k; ++i) {
    report.replication_seeds.push_back(derive_stream_seed(master_seed, i));
    report.clamp_warnings += clamp_counts[i];
    report.deferred_entries += deferred_counts[i];
  }
  report.probability = probability_map(binaries);
  try {
    report.uncertainty = uncertainty_fraction(report.probability, u_lo, u_hi);
  } catch (const std::runtime_error&) {
    report.uncertainty = std::nan("");
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline void write_probability_csv(std::ostream& out, const ProbabilityMap& pm) {
  write_framed_csv(out, "sagwave-prob", pm.spec, pm.probs, pm.valid);
}

inline ProbabilityMap read_probability_csv(std::istream& in) {
  FramedCsv f = read_framed_csv(in, "sagwave-prob");
  return ProbabilityMap{f.spec, std::move(f.values), std::move(f.flags), 0};
}

}  // namespace sagwave

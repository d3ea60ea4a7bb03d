#pragma once

// SIR dynamics: the deterministic mean-field reference and the discrete-time
// stochastic process on a contact network.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "takeoff/netgen.hpp"

namespace takeoff {

/// Per-step probabilities for the network process (rates for the ODE).
struct SirParams {
  double beta = 0.0;
  double mu = 0.1;

  void validate() const;
};

enum class SeedSelection { UniformRandom, FixedNode };

struct SimConfig {
  std::size_t max_steps = 1000;
  std::size_t initial_infected = 1;
  SeedSelection seed_selection = SeedSelection::UniformRandom;
  NodeId fixed_node = 0;
  std::uint64_t master_seed = 1;
  /// Per-step counts and events are stored for steps <= record_horizon only.
  /// t_end and final_r are always exact.
  std::size_t record_horizon = std::numeric_limits<std::size_t>::max();

  void validate(std::size_t n_nodes) const;
};

struct Compartments {
  std::uint32_t s = 0;
  std::uint32_t i = 0;
  std::uint32_t r = 0;

  friend bool operator==(const Compartments&, const Compartments&) = default;
};

struct Trajectory {
  std::vector<Compartments> counts;  // steps 0..min(t_end, record_horizon)
  std::size_t t_end = 0;
  std::size_t final_r = 0;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Infection {
  std::uint32_t step;
  NodeId infectee;
  NodeId infector;

  friend bool operator==(const Infection&, const Infection&) = default;
};

struct Recovery {
  std::uint32_t step;
  NodeId node;

  friend bool operator==(const Recovery&, const Recovery&) = default;
};

/// Who-infected-whom log of one run. Events are stored in step order.
struct TransmissionRecord {
  std::vector<Infection> infections;
  std::vector<Recovery> recoveries;
  std::vector<NodeId> seed_nodes;

  /// Directed transmission edges (infector, infectee) with step <= t.
  std::vector<std::pair<NodeId, NodeId>> transmission_graph(std::size_t t) const;

  friend bool operator==(const TransmissionRecord&, const TransmissionRecord&) = default;
};

struct SimRun {
  std::uint64_t run_id = 0;
  Trajectory trajectory;
  TransmissionRecord record;

  friend bool operator==(const SimRun&, const SimRun&) = default;
};

struct BatchResult {
  SirParams params;
  SimConfig config;
  std::size_t n_nodes = 0;
  std::vector<SimRun> runs;  // ordered by run_id

  std::vector<std::size_t> final_sizes() const;
};

/// One stochastic run. Each step, every infectious node tries each susceptible
/// neighbour with probability beta, then recovers with probability mu. Nodes
/// infected during a step become infectious from the next step. The random
/// stream is derived from (config.master_seed, run_index).
SimRun run_stochastic_sir(const Graph& g, const SirParams& params, const SimConfig& config,
                          std::uint64_t run_index);

/// Runs 0..n_runs-1 on `workers` threads (0 = hardware concurrency). The
/// result does not depend on the worker count.
BatchResult run_batch(const Graph& g, const SirParams& params, const SimConfig& config, std::size_t n_runs,
                      std::size_t workers = 0);

struct Histogram {
  std::size_t bin_width = 1;
  std::vector<std::size_t> counts;  // bin b covers [b * bin_width, (b + 1) * bin_width)

  std::size_t bin_start(std::size_t b) const noexcept { return b * bin_width; }
  std::size_t total() const noexcept;
};

/// Final-size histogram over [0, n_nodes].
Histogram final_size_histogram(std::span<const std::size_t> final_sizes, std::size_t n_nodes, std::size_t bin_width);
Histogram final_size_histogram(const BatchResult& batch, std::size_t bin_width);

/// Centred moving average; windows are clipped at the edges.
std::vector<double> smooth_histogram(const Histogram& h, std::size_t window = 5);

/// Indices of local maxima of a series. A plateau counts once (its first bin)
/// when strictly higher than both neighbouring values.
std::vector<std::size_t> local_maxima(std::span<const double> series);

/// Fraction of runs with final_r < phi_star.
double estimate_dieout_prob(std::span<const std::size_t> final_sizes, double phi_star);
double estimate_dieout_prob(const BatchResult& batch, double phi_star);

struct OdeSample {
  double t, s, i, r;
};

struct OdeTrajectory {
  double dt = 0.0;
  std::vector<OdeSample> samples;
};

/// Classic RK4 integration of dS/dt = -beta S I / N, dI/dt = beta S I / N - mu I,
/// dR/dt = mu I from S = N - i0, I = i0, R = 0. Emits every `stride`-th step.
OdeTrajectory run_deterministic_sir(double beta, double mu, double n, double i0, double t_end, double dt,
                                   std::size_t stride = 1);

/// One JSON object per run (see README for the schema).
void write_trajectory_jsonl(const BatchResult& batch, std::ostream& out);
BatchResult read_trajectory_jsonl(std::istream& in, std::size_t n_nodes);

/// `bin_start,count` rows behind a format header.
void write_histogram_csv(const Histogram& h, std::ostream& out);

}  // namespace takeoff

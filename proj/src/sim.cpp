#include "takeoff/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "json.hpp"

#include "takeoff/error.hpp"
#include "takeoff/rng.hpp"

namespace takeoff {

namespace {

enum : std::uint8_t { kS = 0, kI = 1, kR = 2 };

std::vector<NodeId> pick_seeds(std::size_t n, const SimConfig& cfg, RandomStream& rng) {
  std::vector<NodeId> seeds;
  seeds.reserve(cfg.initial_infected);
  if (cfg.seed_selection == SeedSelection::FixedNode) seeds.push_back(cfg.fixed_node);
  while (seeds.size() < cfg.initial_infected) {
    const auto v = static_cast<NodeId>(rng.below(n));
    if (std::find(seeds.begin(), seeds.end(), v) == seeds.end()) seeds.push_back(v);
  }
  return seeds;
}

}  // namespace

void SirParams::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must be in [0,1]");
  if (!(mu > 0.0 && mu <= 1.0)) throw InvalidArgument("mu must be in (0,1]");
}

void SimConfig::validate(std::size_t n_nodes) const {
  if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
  if (initial_infected < 1 || initial_infected >= n_nodes)
    throw InvalidArgument("initial_infected must be in [1, N)");
  if (seed_selection == SeedSelection::FixedNode && fixed_node >= n_nodes)
    throw InvalidArgument("fixed seed node out of range");
}

std::vector<std::pair<NodeId, NodeId>> TransmissionRecord::transmission_graph(std::size_t t) const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (const auto& inf : infections) {
    if (inf.step > t) break;
    out.emplace_back(inf.infector, inf.infectee);
  }
  return out;
}

std::vector<std::size_t> BatchResult::final_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.trajectory.final_r);
  return out;
}

SimRun run_stochastic_sir(const Graph& g, const SirParams& params, const SimConfig& config,
                          std::uint64_t run_index) {
  const std::size_t n = g.num_nodes();
  params.validate();
  config.validate(n);

  RandomStream rng(config.master_seed, run_index);
  SimRun run;
  run.run_id = run_index;
  auto& traj = run.trajectory;
  auto& rec = run.record;

  std::vector<std::uint8_t> state(n, kS);
  std::vector<NodeId> infectious = pick_seeds(n, config, rng);
  rec.seed_nodes = infectious;
  for (NodeId v : infectious) state[v] = kI;

  auto s = static_cast<std::uint32_t>(n - infectious.size());
  auto i = static_cast<std::uint32_t>(infectious.size());
  std::uint32_t r = 0;
  traj.counts.push_back({s, i, r});

  std::vector<NodeId> fresh, still;
  std::size_t t = 0;
  while (!infectious.empty() && t < config.max_steps) {
    const auto step = static_cast<std::uint32_t>(t + 1);
    const bool keep = t + 1 <= config.record_horizon;
    fresh.clear();
    still.clear();
    if (params.beta > 0.0) {
      for (NodeId u : infectious) {
        for (NodeId w : g.neighbors(u)) {
          if (state[w] != kS || !rng.bernoulli(params.beta)) continue;
          state[w] = kI;
          fresh.push_back(w);
          if (keep) rec.infections.push_back({step, w, u});
        }
      }
    }
    for (NodeId u : infectious) {
      if (rng.bernoulli(params.mu)) {
        state[u] = kR;
        ++r;
        if (keep) rec.recoveries.push_back({step, u});
      } else {
        still.push_back(u);
      }
    }
    s -= static_cast<std::uint32_t>(fresh.size());
    infectious.swap(still);
    infectious.insert(infectious.end(), fresh.begin(), fresh.end());
    i = static_cast<std::uint32_t>(infectious.size());
    ++t;
    if (keep) traj.counts.push_back({s, i, r});
  }
  traj.t_end = t;
  traj.final_r = r;
  return run;
}

BatchResult run_batch(const Graph& g, const SirParams& params, const SimConfig& config, std::size_t n_runs,
                      std::size_t workers) {
  if (n_runs < 1) throw InvalidArgument("n_runs must be >= 1");
  params.validate();
  config.validate(g.num_nodes());
  BatchResult batch{params, config, g.num_nodes(), std::vector<SimRun>(n_runs)};
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_runs);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next.fetch_add(1); k < n_runs; k = next.fetch_add(1))
      batch.runs[k] = run_stochastic_sir(g, params, config, k);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return batch;
}

std::size_t Histogram::total() const noexcept {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Histogram final_size_histogram(std::span<const std::size_t> final_sizes, std::size_t n_nodes,
                               std::size_t bin_width) {
  if (bin_width < 1) throw InvalidArgument("bin_width must be >= 1");
  if (final_sizes.empty()) throw InvalidArgument("empty batch");
  Histogram h;
  h.bin_width = bin_width;
  h.counts.assign(n_nodes / bin_width + 1, 0);
  for (auto f : final_sizes) {
    if (f > n_nodes) throw InvalidArgument("final size exceeds node count");
    ++h.counts[f / bin_width];
  }
  return h;
}

Histogram final_size_histogram(const BatchResult& batch, std::size_t bin_width) {
  const auto sizes = batch.final_sizes();
  return final_size_histogram(sizes, batch.n_nodes, bin_width);
}

std::vector<double> smooth_histogram(const Histogram& h, std::size_t window) {
  if (window < 1) throw InvalidArgument("smoothing window must be >= 1");
  const std::size_t half = window / 2;
  const std::size_t nb = h.counts.size();
  std::vector<double> out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b >= half ? b - half : 0;
    const std::size_t hi = std::min(nb - 1, b + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += static_cast<double>(h.counts[j]);
    out[b] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<std::size_t> local_maxima(std::span<const double> series) {
  std::vector<std::size_t> out;
  const std::size_t n = series.size();
  std::size_t b = 0;
  while (b < n) {
    std::size_t e = b;
    while (e + 1 < n && series[e + 1] == series[b]) ++e;
    const bool left = b == 0 || series[b - 1] < series[b];
    const bool right = e + 1 == n || series[e + 1] < series[b];
    if (left && right && series[b] > 0.0) out.push_back(b);
    b = e + 1;
  }
  return out;
}

double estimate_dieout_prob(std::span<const std::size_t> final_sizes, double phi_star) {
  if (final_sizes.empty()) throw InvalidArgument("empty batch");
  if (!(phi_star > 0.0)) throw InvalidArgument("phi_star must be > 0");
  std::size_t die = 0;
  for (auto f : final_sizes) die += static_cast<double>(f) < phi_star;
  return static_cast<double>(die) / static_cast<double>(final_sizes.size());
}

double estimate_dieout_prob(const BatchResult& batch, double phi_star) {
  if (!(phi_star < static_cast<double>(batch.n_nodes))) throw InvalidArgument("phi_star must be < N");
  const auto sizes = batch.final_sizes();
  return estimate_dieout_prob(sizes, phi_star);
}

OdeTrajectory run_deterministic_sir(double beta, double mu, double n, double i0, double t_end, double dt,
                                   std::size_t stride) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  if (!(i0 > 0.0 && i0 < n)) throw InvalidArgument("i0 must be in (0, N)");
  if (stride < 1) throw InvalidArgument("stride must be >= 1");
  struct State {
    double s, i, r;
  };
  auto deriv = [&](const State& x) {
    const double inf = beta * x.s * x.i / n;
    const double rec = mu * x.i;
    return State{-inf, inf - rec, rec};
  };
  auto axpy = [](const State& x, double h, const State& k) { return State{x.s + h * k.s, x.i + h * k.i, x.r + h * k.r}; };

  OdeTrajectory out;
  out.dt = dt;
  State x{n - i0, i0, 0.0};
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  out.samples.push_back({0.0, x.s, x.i, x.r});
  for (std::size_t k = 1; k <= steps; ++k) {
    const State k1 = deriv(x);
    const State k2 = deriv(axpy(x, dt / 2, k1));
    const State k3 = deriv(axpy(x, dt / 2, k2));
    const State k4 = deriv(axpy(x, dt, k3));
    x.s += dt / 6 * (k1.s + 2 * k2.s + 2 * k3.s + k4.s);
    x.i += dt / 6 * (k1.i + 2 * k2.i + 2 * k3.i + k4.i);
    x.r += dt / 6 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);
    if (!std::isfinite(x.s) || !std::isfinite(x.i) || !std::isfinite(x.r))
      throw NumericalError("ODE integration diverged at step " + std::to_string(k));
    if (k % stride == 0 || k == steps) out.samples.push_back({static_cast<double>(k) * dt, x.s, x.i, x.r});
  }
  return out;
}

void write_trajectory_jsonl(const BatchResult& batch, std::ostream& out) {
  nlohmann::ordered_json header;
  header["format"] = "takeoff-trajectories";
  header["version"] = 1;
  header["n_nodes"] = batch.n_nodes;
  header["master_seed"] = batch.config.master_seed;
  header["max_steps"] = batch.config.max_steps;
  out << header.dump() << '\n';
  for (const auto& run : batch.runs) {
    nlohmann::ordered_json j;
    j["run_id"] = run.run_id;
    j["seed_nodes"] = run.record.seed_nodes;
    j["beta"] = batch.params.beta;
    j["mu"] = batch.params.mu;
    j["t_end"] = run.trajectory.t_end;
    j["final_r"] = run.trajectory.final_r;
    auto& counts = j["counts"] = nlohmann::ordered_json::array();
    for (const auto& c : run.trajectory.counts) counts.push_back({c.s, c.i, c.r});
    auto& inf = j["infections"] = nlohmann::ordered_json::array();
    for (const auto& e : run.record.infections) inf.push_back({e.step, e.infectee, e.infector});
    auto& rec = j["recoveries"] = nlohmann::ordered_json::array();
    for (const auto& e : run.record.recoveries) rec.push_back({e.step, e.node});
    out << j.dump() << '\n';
  }
}

BatchResult read_trajectory_jsonl(std::istream& in, std::size_t n_nodes) {
  BatchResult batch;
  batch.n_nodes = n_nodes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("format")) {
        if (j.at("format") != "takeoff-trajectories" || j.at("version") != 1)
          throw ParseError("unsupported trajectory format", lineno);
        if (j.at("n_nodes").get<std::size_t>() != n_nodes)
          throw ParseError("trajectories were simulated on a graph of another size", lineno);
        batch.config.master_seed = j.at("master_seed").get<std::uint64_t>();
        batch.config.max_steps = j.at("max_steps").get<std::size_t>();
        continue;
      }
      SimRun run;
      run.run_id = j.at("run_id").get<std::uint64_t>();
      run.record.seed_nodes = j.at("seed_nodes").get<std::vector<NodeId>>();
      batch.params.beta = j.at("beta").get<double>();
      batch.params.mu = j.at("mu").get<double>();
      run.trajectory.t_end = j.at("t_end").get<std::size_t>();
      run.trajectory.final_r = j.at("final_r").get<std::size_t>();
      for (const auto& c : j.at("counts"))
        run.trajectory.counts.push_back({c.at(0).get<std::uint32_t>(), c.at(1).get<std::uint32_t>(),
                                         c.at(2).get<std::uint32_t>()});
      for (const auto& e : j.at("infections"))
        run.record.infections.push_back(
            {e.at(0).get<std::uint32_t>(), e.at(1).get<NodeId>(), e.at(2).get<NodeId>()});
      for (const auto& e : j.at("recoveries"))
        run.record.recoveries.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<NodeId>()});
      for (NodeId v : run.record.seed_nodes)
        if (v >= n_nodes) throw ParseError("seed node out of range", lineno);
      batch.runs.push_back(std::move(run));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad trajectory record: ") + e.what(), lineno);
    }
  }
  if (batch.runs.empty()) throw ParseError("no trajectory records", 0);
  batch.config.initial_infected = batch.runs.front().record.seed_nodes.size();
  std::size_t horizon = 0;
  bool truncated = false;
  for (const auto& r : batch.runs) {
    horizon = std::max(horizon, r.trajectory.counts.size() - 1);
    truncated |= r.trajectory.counts.size() - 1 < r.trajectory.t_end;
  }
  if (truncated) batch.config.record_horizon = horizon;
  return batch;
}

void write_histogram_csv(const Histogram& h, std::ostream& out) {
  out << "# format: takeoff-histogram/1\nbin_start,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) out << h.bin_start(b) << ',' << h.counts[b] << '\n';
}

}  // namespace takeoff

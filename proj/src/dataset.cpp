#include "takeoff/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "takeoff/error.hpp"
#include "takeoff/rng.hpp"

namespace takeoff {

using ojson = nlohmann::ordered_json;

double LabelingConfig::resolve(const BatchResult& batch) const {
  if (phi_star && !auto_phi) {
    if (!(*phi_star > 0.0 && *phi_star < static_cast<double>(batch.n_nodes)))
      throw InvalidArgument("phi_star must be in (0, N)");
    return *phi_star;
  }
  if (!auto_phi) throw InvalidArgument("labeling: set phi_star or enable auto_phi");
  const auto sizes = batch.final_sizes();
  return auto_phi_star(sizes, batch.n_nodes, bin_width, smooth_window);
}

double auto_phi_star(std::span<const std::size_t> final_sizes, std::size_t n_nodes, std::size_t bin_width,
                     std::size_t smooth_window) {
  if (bin_width == 0) bin_width = std::max<std::size_t>(1, n_nodes / 100);
  const Histogram h = final_size_histogram(final_sizes, n_nodes, bin_width);
  const auto smooth = smooth_histogram(h, smooth_window);
  const auto modes = local_maxima(smooth);
  if (modes.size() < 2) throw UnimodalError("final-size distribution has no take-off mode");
  const std::size_t lo = modes.front();
  std::size_t hi = modes[1];
  for (std::size_t k = 2; k < modes.size(); ++k)
    if (smooth[modes[k]] > smooth[hi]) hi = modes[k];
  std::size_t best = lo + 1;
  for (std::size_t b = lo + 1; b < hi; ++b)
    if (smooth[b] < smooth[best]) best = b;
  return static_cast<double>(h.bin_start(best));
}

ObservedSequence truncate(const SimRun& run, std::size_t t_o) {
  const auto& traj = run.trajectory;
  const std::size_t recorded = traj.counts.size() - 1;
  if (recorded < traj.t_end && t_o > recorded)
    throw InvalidArgument("observation horizon exceeds the recorded part of the run");
  ObservedSequence seq;
  seq.t_o = t_o;
  seq.cum_counts.assign(t_o + 1, 0);
  seq.new_counts.assign(t_o + 1, 0);
  seq.infected_nodes.assign(t_o + 1, {});
  seq.infected_nodes[0] = run.record.seed_nodes;
  for (const auto& inf : run.record.infections) {
    if (inf.step > t_o) break;
    ++seq.new_counts[inf.step];
    seq.infected_nodes[inf.step].push_back(inf.infectee);
  }
  std::uint32_t cum = static_cast<std::uint32_t>(run.record.seed_nodes.size());
  for (std::size_t t = 0; t <= t_o; ++t) {
    cum += seq.new_counts[t];
    seq.cum_counts[t] = cum;
  }
  return seq;
}

ObservedSequence truncate(const ObservedSequence& seq, std::size_t t_o) {
  if (t_o > seq.t_o) throw InvalidArgument("cannot extend an observed sequence");
  ObservedSequence out;
  out.t_o = t_o;
  out.cum_counts.assign(seq.cum_counts.begin(), seq.cum_counts.begin() + t_o + 1);
  out.new_counts.assign(seq.new_counts.begin(), seq.new_counts.begin() + t_o + 1);
  out.infected_nodes.assign(seq.infected_nodes.begin(), seq.infected_nodes.begin() + t_o + 1);
  return out;
}

const char* split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split '" + s + "'", 0);
}

// Largest-remainder apportionment of n items over the three ratios.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> w{r.train, r.validation, r.test};
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = w[k] * static_cast<double>(n);
    out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(out[k]);
    used += out[k];
  }
  while (used < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best] + 1e-12) best = k;
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

}  // namespace

void SplitRatios::validate() const {
  if (!(train > 0.0 && validation > 0.0 && test > 0.0)) throw InvalidArgument("split ratios must be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9) throw InvalidArgument("split ratios must sum to 1");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < samples.size(); ++k)
    if (samples[k].split == s) out.push_back(k);
  return out;
}

double Dataset::positive_fraction() const {
  if (samples.empty()) return 0.0;
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.label == 1;
  return static_cast<double>(pos) / static_cast<double>(samples.size());
}

Dataset build_dataset(const BatchResult& batch, std::size_t t_o, double phi_star, const SplitRatios& ratios,
                      std::uint64_t split_seed, Provenance base) {
  ratios.validate();
  if (!(phi_star > 0.0)) throw InvalidArgument("phi_star must be > 0");
  Dataset ds;
  ds.provenance = std::move(base);
  ds.provenance.n_nodes = batch.n_nodes;
  ds.provenance.beta = batch.params.beta;
  ds.provenance.mu = batch.params.mu;
  ds.provenance.phi_star = phi_star;
  ds.provenance.master_seed = batch.config.master_seed;
  ds.provenance.split_seed = split_seed;
  ds.provenance.t_o = t_o;

  ds.samples.reserve(batch.runs.size());
  std::array<std::vector<std::size_t>, 2> by_class;
  for (const auto& run : batch.runs) {
    LabeledSample s;
    s.id = run.run_id;
    s.observed = truncate(run, t_o);
    s.final_r = run.trajectory.final_r;
    s.label = label(s.final_r, phi_star);
    by_class[s.label].push_back(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw InvalidArgument("stratified split impossible: a class is absent from the batch");

  // Shuffle each class, then interleave by relative rank so every prefix of
  // the merged order is (nearly) class-proportional.
  struct Slot {
    double key;
    int cls;
    std::size_t idx;
  };
  std::vector<Slot> order;
  order.reserve(ds.samples.size());
  for (int c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    RandomStream rng(split_seed, 0x53504C4954ull + static_cast<std::uint64_t>(c));
    for (std::size_t k = members.size(); k > 1; --k) std::swap(members[k - 1], members[rng.below(k)]);
    const double nc = static_cast<double>(members.size());
    for (std::size_t k = 0; k < members.size(); ++k)
      order.push_back({(static_cast<double>(k) + 0.5) / nc, c, members[k]});
  }
  std::stable_sort(order.begin(), order.end(), [](const Slot& a, const Slot& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });
  const auto sizes = apportion(order.size(), ratios);
  for (std::size_t k = 0; k < order.size(); ++k) {
    Split s = Split::Test;
    if (k < sizes[0]) s = Split::Train;
    else if (k < sizes[0] + sizes[1]) s = Split::Validation;
    ds.samples[order[k].idx].split = s;
  }
  return ds;
}

Dataset retruncate(const Dataset& ds, std::size_t t_o) {
  Dataset out = ds;
  out.provenance.t_o = t_o;
  for (auto& s : out.samples) s.observed = truncate(s.observed, t_o);
  return out;
}

void save_dataset(const Dataset& ds, std::ostream& out) {
  const auto& p = ds.provenance;
  ojson header;
  header["format"] = "takeoff-dataset";
  header["version"] = Dataset::kFormatVersion;
  header["network"] = p.network;
  header["graph"] = p.graph_fingerprint;
  header["n_nodes"] = p.n_nodes;
  header["beta"] = p.beta;
  header["mu"] = p.mu;
  header["phi_star"] = p.phi_star;
  header["master_seed"] = p.master_seed;
  header["split_seed"] = p.split_seed;
  header["t_o"] = p.t_o;
  out << header.dump() << '\n';
  for (const auto& s : ds.samples) {
    ojson j;
    j["id"] = s.id;
    j["label"] = s.label;
    j["t_o"] = s.observed.t_o;
    j["cum_counts"] = s.observed.cum_counts;
    j["new_counts"] = s.observed.new_counts;
    j["infected_nodes"] = s.observed.infected_nodes;
    j["final_r"] = s.final_r;
    j["split"] = split_name(s.split);
    out << j.dump() << '\n';
  }
}

Dataset load_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  try {
    if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
    ++lineno;
    const auto h = nlohmann::json::parse(line);
    if (h.at("format") != "takeoff-dataset") throw FormatError("not a dataset file");
    if (h.at("version").get<int>() != Dataset::kFormatVersion)
      throw FormatError("unsupported dataset version " + h.at("version").dump());
    auto& p = ds.provenance;
    p.network = h.at("network").get<std::string>();
    p.graph_fingerprint = h.at("graph").get<std::string>();
    p.n_nodes = h.at("n_nodes").get<std::size_t>();
    p.beta = h.at("beta").get<double>();
    p.mu = h.at("mu").get<double>();
    p.phi_star = h.at("phi_star").get<double>();
    p.master_seed = h.at("master_seed").get<std::uint64_t>();
    p.split_seed = h.at("split_seed").get<std::uint64_t>();
    p.t_o = h.at("t_o").get<std::size_t>();
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      LabeledSample s;
      s.id = j.at("id").get<std::uint64_t>();
      s.label = j.at("label").get<int>();
      s.observed.t_o = j.at("t_o").get<std::size_t>();
      s.observed.cum_counts = j.at("cum_counts").get<std::vector<std::uint32_t>>();
      s.observed.new_counts = j.at("new_counts").get<std::vector<std::uint32_t>>();
      s.observed.infected_nodes = j.at("infected_nodes").get<std::vector<std::vector<NodeId>>>();
      s.final_r = j.at("final_r").get<std::size_t>();
      s.split = parse_split(j.at("split").get<std::string>());
      const std::size_t len = s.observed.t_o + 1;
      if (s.observed.cum_counts.size() != len || s.observed.new_counts.size() != len ||
          s.observed.infected_nodes.size() != len)
        throw ParseError("sequence length does not match t_o", lineno);
      if (s.label != label(s.final_r, p.phi_star)) throw ParseError("label inconsistent with final_r", lineno);
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset record: ") + e.what(), lineno);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  save_dataset(ds, out);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  return load_dataset(in);
}

}  // namespace takeoff

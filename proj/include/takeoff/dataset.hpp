#pragma once

// Labelled, truncated observation windows built from simulated runs.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "takeoff/sim.hpp"

namespace takeoff {

struct LabelingConfig {
  std::optional<double> phi_star;  // explicit threshold
  bool auto_phi = false;           // derive from the final-size histogram valley
  std::size_t bin_width = 0;       // 0 = max(1, N / 100)
  std::size_t smooth_window = 5;

  /// Threshold for a batch: explicit value or histogram valley.
  double resolve(const BatchResult& batch) const;
};

/// 1 when the final size reaches the threshold, else 0.
constexpr int label(std::size_t final_r, double phi_star) noexcept {
  return static_cast<double>(final_r) >= phi_star ? 1 : 0;
}

/// Start of the smoothed-histogram minimum between the die-out mode (the
/// leftmost local maximum) and the highest mode to its right. Ties go to the
/// smaller bin. Throws UnimodalError when fewer than two modes exist.
double auto_phi_star(std::span<const std::size_t> final_sizes, std::size_t n_nodes, std::size_t bin_width = 0,
                     std::size_t smooth_window = 5);

/// What a predictor may see up to the observation horizon t_o.
struct ObservedSequence {
  std::size_t t_o = 0;
  std::vector<std::uint32_t> cum_counts;  // seeds + infections with step <= t
  std::vector<std::uint32_t> new_counts;  // infections at step t; step 0 holds 0
  /// Nodes infected at each step. Entry 0 lists the seed nodes.
  std::vector<std::vector<NodeId>> infected_nodes;

  friend bool operator==(const ObservedSequence&, const ObservedSequence&) = default;
};

/// Restricts a run to steps <= t_o. Past the end of the run the sequence is
/// padded with zero new infections.
ObservedSequence truncate(const SimRun& run, std::size_t t_o);

/// Truncates an already-observed sequence further (t_o <= seq.t_o).
ObservedSequence truncate(const ObservedSequence& seq, std::size_t t_o);

enum class Split : std::uint8_t { Train, Validation, Test };

const char* split_name(Split s) noexcept;

struct LabeledSample {
  std::uint64_t id = 0;
  ObservedSequence observed;
  int label = 0;
  std::size_t final_r = 0;
  Split split = Split::Train;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Provenance {
  std::string network;            // human-readable network description
  std::string graph_fingerprint;  // Graph::fingerprint_hex()
  std::size_t n_nodes = 0;
  double beta = 0.0;
  double mu = 0.0;
  double phi_star = 0.0;
  std::uint64_t master_seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t t_o = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;

  void validate() const;
};

struct Dataset {
  static constexpr int kFormatVersion = 1;

  Provenance provenance;
  std::vector<LabeledSample> samples;

  std::vector<std::size_t> indices(Split s) const;
  /// Fraction of label-1 samples.
  double positive_fraction() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Labels every run and assigns a stratified split deterministically from
/// split_seed. `base` supplies the network description; numeric provenance
/// fields are filled in here.
Dataset build_dataset(const BatchResult& batch, std::size_t t_o, double phi_star, const SplitRatios& ratios,
                      std::uint64_t split_seed, Provenance base = {});

/// Same dataset with every sample truncated at a shorter horizon.
Dataset retruncate(const Dataset& ds, std::size_t t_o);

void save_dataset(const Dataset& ds, std::ostream& out);
Dataset load_dataset(std::istream& in);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace takeoff

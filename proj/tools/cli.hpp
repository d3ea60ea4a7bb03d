#pragma once

// Command-line front end: subcommands, config documents, run manifests and
// SVG charts.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace takeoff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands `--config FILE` into flags placed right after the subcommand name,
/// so that flags given on the command line win. Keys may be flat or grouped
/// under a [subcommand] section; arrays become comma-separated lists.
std::vector<std::string> expand_config(const std::vector<std::string>& args,
                                       const std::vector<std::string>& subcommands);

std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::string& path);

/// Run manifest written next to a command's primary output.
struct Manifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  /// Everything except wall time, as serialised into the file.
  nlohmann::ordered_json content() const;
  void write(const std::string& path, double wall_seconds) const;
};

std::string tool_version();

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotData {
  enum class Kind { Line, Bars } kind = Kind::Line;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Reads a metrics CSV (one series per model, `metric` column against t_o), a
/// histogram CSV (bars), a ROC JSON (one curve per model and t_o) or a plain
/// `x,y` CSV. Throws EmptyInput when no point remains.
PlotData parse_plot_input(std::istream& in, const std::string& metric = "auc");
PlotData read_plot_input(const std::string& path, const std::string& metric = "auc");

std::string render_svg(const PlotData& data);

}  // namespace takeoff::cli

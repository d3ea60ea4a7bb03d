#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "takeoff/error.hpp"

namespace takeoff::cli {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

bool to_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

Series& series_named(PlotData& d, const std::string& label) {
  for (auto& s : d.series)
    if (s.label == label) return s;
  d.series.push_back({label, {}, {}});
  return d.series.back();
}

PlotData parse_metrics(std::istream& in, const std::string& metric) {
  PlotData d;
  d.title = metric + " vs observation time";
  d.x_label = "t_o";
  d.y_label = metric;
  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("metrics file has no column header");
  const auto header = split_csv(line);
  const auto col = std::find(header.begin(), header.end(), metric);
  if (col == header.end()) throw InvalidArgument("metrics file has no column '" + metric + "'");
  const auto c = static_cast<std::size_t>(col - header.begin());
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError("wrong number of columns", lineno);
    double t = 0.0, v = 0.0;
    if (!to_number(cells[1], t)) throw ParseError("bad t_o", lineno);
    auto& s = series_named(d, cells[0]);
    if (!to_number(cells[c], v)) continue;
    s.x.push_back(t);
    s.y.push_back(v);
  }
  return d;
}

PlotData parse_histogram(std::istream& in) {
  PlotData d;
  d.kind = PlotData::Kind::Bars;
  d.title = "final-size histogram";
  d.x_label = "final size";
  d.y_label = "runs";
  std::string line;
  std::getline(in, line);
  Series s{"runs", {}, {}};
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    double x = 0.0, y = 0.0;
    if (cells.size() != 2 || !to_number(cells[0], x) || !to_number(cells[1], y)) throw ParseError("bad row", lineno);
    s.x.push_back(x);
    s.y.push_back(y);
  }
  d.series.push_back(std::move(s));
  return d;
}

PlotData parse_roc(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad ROC JSON: ") + e.what(), 0);
  }
  if (j.value("format", "") != "takeoff-roc") throw FormatError("not a ROC file");
  PlotData d;
  d.title = "ROC";
  d.x_label = "false positive rate";
  d.y_label = "true positive rate";
  for (const auto& c : j.at("curves")) {
    Series s{c.at("model").get<std::string>() + " t_o=" + std::to_string(c.at("t_o").get<std::size_t>()), {}, {}};
    for (const auto& p : c.at("points")) {
      s.x.push_back(p.at(0).get<double>());
      s.y.push_back(p.at(1).get<double>());
    }
    d.series.push_back(std::move(s));
  }
  return d;
}

PlotData parse_xy(std::istream& in) {
  PlotData d;
  d.x_label = "x";
  d.y_label = "y";
  Series s{"series", {}, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    double x = 0.0, y = 0.0;
    const bool numeric = cells.size() == 2 && to_number(cells[0], x) && to_number(cells[1], y);
    if (!numeric) {
      if (s.x.empty() && cells.size() == 2) {
        d.x_label = cells[0];
        d.y_label = cells[1];
        continue;
      }
      throw ParseError("expected x,y", lineno);
    }
    s.x.push_back(x);
    s.y.push_back(y);
  }
  d.series.push_back(std::move(s));
  return d;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string joined(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + num(v[i]);
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

PlotData parse_plot_input(std::istream& in, const std::string& metric) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw EmptyInput("plot input is empty");
  PlotData d;
  if (text[first] == '{') {
    d = parse_roc(text);
  } else {
    std::istringstream body(text);
    std::string head;
    std::getline(body, head);
    if (head == "# format: takeoff-metrics/1") {
      d = parse_metrics(body, metric);
    } else if (head == "# format: takeoff-histogram/1") {
      d = parse_histogram(body);
    } else {
      std::istringstream again(text);
      d = parse_xy(again);
    }
  }
  std::erase_if(d.series, [](const Series& s) { return s.x.empty(); });
  if (d.series.empty()) throw EmptyInput("plot input has no data points");
  return d;
}

PlotData read_plot_input(const std::string& path, const std::string& metric) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return parse_plot_input(in, metric);
}

std::string render_svg(const PlotData& d) {
  if (d.series.empty()) throw EmptyInput("nothing to plot");
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : d.series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw EmptyInput("series '" + s.label + "' has no points");
    x0 = std::min(x0, *std::min_element(s.x.begin(), s.x.end()));
    x1 = std::max(x1, *std::max_element(s.x.begin(), s.x.end()));
    y0 = std::min(y0, *std::min_element(s.y.begin(), s.y.end()));
    y1 = std::max(y1, *std::max_element(s.y.begin(), s.y.end()));
  }
  double bar_w = 0.0;
  if (d.kind == PlotData::Kind::Bars) {
    y0 = std::min(y0, 0.0);
    const auto& xs = d.series[0].x;
    bar_w = xs.size() > 1 ? (xs[1] - xs[0]) : 1.0;
    x1 += bar_w;
  }
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" data-format=\"takeoff-plot/1\" data-kind=\""
    << (d.kind == PlotData::Kind::Bars ? "bars" : "line") << "\">\n";
  o << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  if (!d.title.empty())
    o << "<text x=\"" << px(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(d.title)
      << "</text>\n";
  o << "<g class=\"axes\" stroke=\"black\" data-x-min=\"" << num(x0) << "\" data-x-max=\"" << num(x1)
    << "\" data-y-min=\"" << num(y0) << "\" data-y-max=\"" << num(y1) << "\">\n";
  o << "<line x1=\"" << px(L) << "\" y1=\"" << px(H - B) << "\" x2=\"" << px(W - R) << "\" y2=\"" << px(H - B)
    << "\"/>\n";
  o << "<line x1=\"" << px(L) << "\" y1=\"" << px(T) << "\" x2=\"" << px(L) << "\" y2=\"" << px(H - B) << "\"/>\n";
  o << "</g>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor) {
    o << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" text-anchor=\"" << anchor << "\" font-size=\"11\">"
      << escape(text) << "</text>\n";
  };
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x0);
  label(L, H - B + 15, buf, "middle");
  std::snprintf(buf, sizeof buf, "%.4g", x1);
  label(W - R, H - B + 15, buf, "middle");
  std::snprintf(buf, sizeof buf, "%.4g", y0);
  label(L - 5, H - B + 4, buf, "end");
  std::snprintf(buf, sizeof buf, "%.4g", y1);
  label(L - 5, T + 4, buf, "end");
  label((L + W - R) / 2, H - 12, d.x_label, "middle");
  o << "<text x=\"16\" y=\"" << px((T + H - B) / 2) << "\" transform=\"rotate(-90 16 " << px((T + H - B) / 2)
    << ")\" text-anchor=\"middle\" font-size=\"11\">" << escape(d.y_label) << "</text>\n";

  for (std::size_t k = 0; k < d.series.size(); ++k) {
    const auto& s = d.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (d.kind == PlotData::Kind::Bars) {
      o << "<g class=\"series\" data-label=\"" << escape(s.label) << "\" fill=\"" << color << "\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double top = sy(s.y[i]), base = sy(std::max(y0, 0.0));
        o << "<rect class=\"bar\" data-x=\"" << num(s.x[i]) << "\" data-y=\"" << num(s.y[i]) << "\" x=\""
          << px(sx(s.x[i])) << "\" y=\"" << px(std::min(top, base)) << "\" width=\""
          << px(std::max(sx(s.x[i] + bar_w) - sx(s.x[i]), 0.5)) << "\" height=\"" << px(std::abs(base - top))
          << "\"/>\n";
      }
      o << "</g>\n";
    } else {
      o << "<polyline class=\"series\" data-label=\"" << escape(s.label) << "\" data-x=\"" << joined(s.x)
        << "\" data-y=\"" << joined(s.y) << "\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(sx(s.x[i])) << ',' << px(sy(s.y[i]));
      o << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    }
    const double ly = T + 14.0 * static_cast<double>(k);
    o << "<rect x=\"" << px(W - R + 10) << "\" y=\"" << px(ly) << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/>\n";
    label(W - R + 24, ly + 9, s.label, "start");
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace takeoff::cli

#include "takeoff/netgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "takeoff/error.hpp"
#include "takeoff/rng.hpp"
#include "takeoff/simd/kernels.hpp"

namespace takeoff {

namespace {

constexpr std::uint64_t kNetworkStream = 0x6E6574776F726Bull;  // "network"

std::uint64_t edge_key(NodeId u, NodeId v) { return (static_cast<std::uint64_t>(u) << 32) | v; }

}  // namespace

Graph::Graph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges) : n_(n) {
  edges_.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw InvalidArgument("edge endpoint out of range");
    if (u == v) continue;
    edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  offsets_.assign(n + 1, 0);
  for (auto [u, v] : edges_) {
    ++offsets_[u + 1];
    ++offsets_[v + 1];
  }
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
  adj_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (auto [u, v] : edges_) {
    adj_[fill[u]++] = v;
    adj_[fill[v]++] = u;
  }
  for (std::size_t i = 0; i < n; ++i) std::sort(adj_.begin() + offsets_[i], adj_.begin() + offsets_[i + 1]);
}

std::size_t Graph::max_degree() const noexcept {
  std::size_t d = 0;
  for (std::size_t v = 0; v < n_; ++v) d = std::max(d, degree(static_cast<NodeId>(v)));
  return d;
}

double Graph::mean_degree() const noexcept { return n_ ? 2.0 * static_cast<double>(edges_.size()) / n_ : 0.0; }

bool Graph::has_edge(NodeId u, NodeId v) const noexcept {
  if (u >= n_ || v >= n_) return false;
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::uint64_t Graph::fingerprint() const noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto feed = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ull;
    }
  };
  feed(n_);
  for (auto [u, v] : edges_) feed(edge_key(u, v));
  return h;
}

std::string Graph::fingerprint_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint()));
  return buf;
}

Graph Graph::relabeled(std::span<const NodeId> perm) const {
  if (perm.size() != n_) throw InvalidArgument("permutation size mismatch");
  std::vector<std::pair<NodeId, NodeId>> e;
  e.reserve(edges_.size());
  for (auto [u, v] : edges_) e.emplace_back(perm[u], perm[v]);
  return Graph(n_, e);
}

void NetworkSpec::validate() const {
  if (kind != NetworkKind::File && n < 2) throw InvalidArgument("network: n must be >= 2");
  switch (kind) {
    case NetworkKind::ER:
      if (!(avg_degree > 0.0) || avg_degree > static_cast<double>(n - 1))
        throw InvalidArgument("network: ER requires 0 < avg_degree <= n-1");
      break;
    case NetworkKind::BA:
      if (m < 1 || m >= n) throw InvalidArgument("network: BA requires 1 <= m < n");
      break;
    case NetworkKind::WS: {
      const auto k = static_cast<std::size_t>(avg_degree);
      if (static_cast<double>(k) != avg_degree || k < 2 || k % 2 != 0 || k >= n)
        throw InvalidArgument("network: WS requires an even integer degree 2 <= k < n");
      if (!(rewire_p >= 0.0 && rewire_p <= 1.0)) throw InvalidArgument("network: WS rewire_p must be in [0,1]");
      break;
    }
    case NetworkKind::File:
      if (path.empty()) throw InvalidArgument("network: file path required");
      break;
  }
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case NetworkKind::ER: os << "ER(n=" << n << ",k=" << avg_degree << ",seed=" << rng_seed << ")"; break;
    case NetworkKind::BA: os << "BA(n=" << n << ",m=" << m << ",seed=" << rng_seed << ")"; break;
    case NetworkKind::WS:
      os << "WS(n=" << n << ",k=" << avg_degree << ",p=" << rewire_p << ",seed=" << rng_seed << ")";
      break;
    case NetworkKind::File: os << "File(" << path << ")"; break;
  }
  return os.str();
}

Graph generate_er(std::size_t n, double avg_degree, std::uint64_t seed) {
  NetworkSpec spec;
  spec.kind = NetworkKind::ER;
  spec.n = n;
  spec.avg_degree = avg_degree;
  spec.validate();
  const double p = avg_degree / static_cast<double>(n - 1);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(static_cast<std::size_t>(p * n * (n - 1) / 2 * 1.1) + 16);
  if (p >= 1.0) {
    for (std::size_t v = 1; v < n; ++v)
      for (std::size_t w = 0; w < v; ++w) edges.emplace_back(static_cast<NodeId>(w), static_cast<NodeId>(v));
    return Graph(n, edges);
  }
  // Geometric skipping over the pairs (v, w), w < v.
  RandomStream rng(seed, kNetworkStream);
  const double log_q = std::log1p(-p);
  std::int64_t v = 1, w = -1;
  const auto nn = static_cast<std::int64_t>(n);
  while (v < nn) {
    const double r = rng.uniform();
    w += 1 + static_cast<std::int64_t>(std::floor(std::log1p(-r) / log_q));
    while (w >= v && v < nn) {
      w -= v;
      ++v;
    }
    if (v < nn) edges.emplace_back(static_cast<NodeId>(w), static_cast<NodeId>(v));
  }
  return Graph(n, edges);
}

Graph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed) {
  NetworkSpec spec;
  spec.kind = NetworkKind::BA;
  spec.n = n;
  spec.m = m;
  spec.validate();
  RandomStream rng(seed, kNetworkStream);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(m * (m - 1) / 2 + m * (n - m));
  std::vector<NodeId> endpoints;  // each node repeated degree times
  endpoints.reserve(2 * edges.capacity());
  for (NodeId u = 0; u < m; ++u) {
    for (NodeId v = u + 1; v < m; ++v) {
      edges.emplace_back(u, v);
      endpoints.push_back(u);
      endpoints.push_back(v);
    }
  }
  std::vector<NodeId> targets;
  for (auto v = static_cast<NodeId>(m); v < n; ++v) {
    targets.clear();
    while (targets.size() < m) {
      const NodeId t = endpoints.empty() ? static_cast<NodeId>(rng.below(v))
                                         : endpoints[rng.below(endpoints.size())];
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
    }
    for (NodeId t : targets) {
      edges.emplace_back(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return Graph(n, edges);
}

Graph generate_ws(std::size_t n, std::size_t k, double rewire_p, std::uint64_t seed) {
  NetworkSpec spec;
  spec.kind = NetworkKind::WS;
  spec.n = n;
  spec.avg_degree = static_cast<double>(k);
  spec.rewire_p = rewire_p;
  spec.validate();
  RandomStream rng(seed, kNetworkStream);
  std::unordered_set<std::uint64_t> present;
  auto key = [](NodeId a, NodeId b) { return edge_key(std::min(a, b), std::max(a, b)); };
  std::vector<std::pair<NodeId, NodeId>> lattice;
  for (NodeId u = 0; u < n; ++u) {
    for (std::size_t j = 1; j <= k / 2; ++j) {
      const auto v = static_cast<NodeId>((u + j) % n);
      lattice.emplace_back(u, v);
      present.insert(key(u, v));
    }
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(lattice.size());
  for (auto [u, v] : lattice) {
    if (rng.bernoulli(rewire_p)) {
      // give up after a bounded number of attempts (dense corner cases)
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto w = static_cast<NodeId>(rng.below(n));
        if (w == u || present.count(key(u, w))) continue;
        present.erase(key(u, v));
        present.insert(key(u, w));
        v = w;
        break;
      }
    }
    edges.emplace_back(u, v);
  }
  return Graph(n, edges);
}

Graph build_network(const NetworkSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case NetworkKind::ER: return generate_er(spec.n, spec.avg_degree, spec.rng_seed);
    case NetworkKind::BA: return generate_ba(spec.n, spec.m, spec.rng_seed);
    case NetworkKind::WS:
      return generate_ws(spec.n, static_cast<std::size_t>(spec.avg_degree), spec.rewire_p, spec.rng_seed);
    case NetworkKind::File: return load_edge_list(spec.path);
  }
  throw InvalidArgument("unknown network kind");
}

Graph parse_edge_list(std::istream& in) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> raw;
  std::optional<std::size_t> declared;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      std::istringstream hs(line.substr(first + 1));
      std::string word;
      std::size_t count;
      if (hs >> word && word == "nodes:" && hs >> count) declared = count;
      continue;
    }
    std::istringstream ls(line);
    long long a, b;
    std::string extra;
    if (!(ls >> a >> b) || (ls >> extra) || a < 0 || b < 0)
      throw ParseError("malformed edge line: '" + line + "'", lineno);
    raw.emplace_back(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b));
  }
  if (in.bad()) throw IoError("read error while parsing edge list");

  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(raw.size());
  if (declared) {
    for (auto [a, b] : raw) {
      if (a >= *declared || b >= *declared) throw ParseError("node id exceeds declared node count", 0);
      edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    }
    return Graph(*declared, edges);
  }
  std::unordered_map<std::uint64_t, NodeId> ids;
  auto id_of = [&ids](std::uint64_t x) {
    auto [it, inserted] = ids.try_emplace(x, static_cast<NodeId>(ids.size()));
    return it->second;
  };
  for (auto [a, b] : raw) {
    const NodeId u = id_of(a);
    const NodeId v = id_of(b);
    edges.emplace_back(u, v);
  }
  return Graph(ids.size(), edges);
}

Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list: " + path);
  return parse_edge_list(in);
}

void write_edge_list(const Graph& g, std::ostream& out) {
  out << "# takeoff edge list v1\n# nodes: " << g.num_nodes() << "\n";
  for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
}

void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write edge list: " + path);
  write_edge_list(g, out);
  if (!out) throw IoError("write failed: " + path);
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) s += val[p] * x[col[p]];
    y[r] = s;
  }
}

void SparseMatrix::multiply_block(std::span<const double> x, std::span<double> y, std::size_t width) const {
  const auto& k = simd::active();
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double* yr = y.data() + r * width;
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) k.axpy(val[p], x.data() + col[p] * width, yr, width);
  }
}

double SparseMatrix::at(std::size_t r, std::size_t c) const noexcept {
  for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
    if (col[p] == c) return val[p];
  return 0.0;
}

SparseMatrix laplacian(const Graph& g) {
  SparseMatrix L;
  L.n = g.num_nodes();
  L.row_ptr.reserve(L.n + 1);
  L.col.reserve(L.n + 2 * g.num_edges());
  L.val.reserve(L.n + 2 * g.num_edges());
  for (NodeId v = 0; v < L.n; ++v) {
    bool diag_done = false;
    auto emit_diag = [&] {
      L.col.push_back(v);
      L.val.push_back(static_cast<double>(g.degree(v)));
      diag_done = true;
    };
    for (NodeId w : g.neighbors(v)) {
      if (!diag_done && w > v) emit_diag();
      L.col.push_back(w);
      L.val.push_back(-1.0);
    }
    if (!diag_done) emit_diag();
    L.row_ptr.push_back(L.col.size());
  }
  return L;
}

}  // namespace takeoff

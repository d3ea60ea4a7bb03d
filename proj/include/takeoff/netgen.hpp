#pragma once

// Contact networks: generators, edge-list I/O and the graph Laplacian.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace takeoff {

using NodeId = std::uint32_t;

/// Simple undirected graph stored as sorted adjacency lists (CSR).
/// Immutable after construction and safe to share across threads.
class Graph {
 public:
  Graph() = default;

  /// Builds a simple graph on `n` nodes. Self-loops are dropped and duplicate
  /// edges (in either orientation) collapsed. Throws InvalidArgument when an
  /// endpoint is >= n.
  Graph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges);

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  std::span<const NodeId> neighbors(NodeId v) const noexcept {
    return {adj_.data() + offsets_[v], adj_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const noexcept { return offsets_[v + 1] - offsets_[v]; }
  std::size_t max_degree() const noexcept;
  double mean_degree() const noexcept;

  /// Edges as (u, v) with u < v, sorted lexicographically.
  std::span<const std::pair<NodeId, NodeId>> edges() const noexcept { return edges_; }

  bool has_edge(NodeId u, NodeId v) const noexcept;

  /// FNV-1a fingerprint over node count and sorted edge list.
  std::uint64_t fingerprint() const noexcept;
  std::string fingerprint_hex() const;

  /// Graph with node v renamed to perm[v].
  Graph relabeled(std::span<const NodeId> perm) const;

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adj_;
};

enum class NetworkKind { ER, BA, WS, File };

struct NetworkSpec {
  NetworkKind kind = NetworkKind::ER;
  std::size_t n = 0;
  double avg_degree = 0.0;  // ER; WS uses it as the (even) lattice degree
  std::size_t m = 0;        // BA
  double rewire_p = 0.1;    // WS
  std::string path;         // File
  std::uint64_t rng_seed = 1;

  void validate() const;
  std::string describe() const;
};

/// Erdos-Renyi G(n, p) with p = avg_degree / (n - 1). Isolated nodes are kept.
Graph generate_er(std::size_t n, double avg_degree, std::uint64_t seed);

/// Barabasi-Albert preferential attachment from an m-node seed clique; every
/// later node attaches to m distinct existing nodes.
Graph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed);

/// Watts-Strogatz small world: ring lattice of even degree k, each lattice
/// edge rewired with probability rewire_p (no self-loops or multi-edges).
Graph generate_ws(std::size_t n, std::size_t k, double rewire_p, std::uint64_t seed);

Graph build_network(const NetworkSpec& spec);

/// Parses the edge-list text format. Lines are `u v` pairs; `#` starts a
/// comment line. Without a `# nodes: N` header, ids are compacted to 0..n-1
/// in first-appearance order. With it, ids are kept verbatim and must be < N.
Graph parse_edge_list(std::istream& in);
Graph load_edge_list(const std::string& path);

/// Writes `# nodes: N` plus one `u v` line per edge; reloads to an identical graph.
void write_edge_list(const Graph& g, std::ostream& out);
void save_edge_list(const Graph& g, const std::string& path);

/// Compressed sparse row matrix.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<NodeId> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return val.size(); }
  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  /// Y = A X for a row-major n x width block.
  void multiply_block(std::span<const double> x, std::span<double> y, std::size_t width) const;
  double at(std::size_t r, std::size_t c) const noexcept;
};

/// Combinatorial Laplacian L = D - A.
SparseMatrix laplacian(const Graph& g);

}  // namespace takeoff

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "takeoff/error.hpp"
#include "takeoff/netgen.hpp"

using namespace takeoff;

TEST_CASE("graph construction deduplicates and drops self-loops") {
  const std::vector<std::pair<NodeId, NodeId>> e{{0, 1}, {1, 0}, {2, 2}, {1, 2}, {1, 2}};
  Graph g(4, e);
  CHECK(g.num_nodes() == 4);
  CHECK(g.num_edges() == 2);
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(3) == 0);
  CHECK(g.has_edge(2, 1));
  CHECK_FALSE(g.has_edge(0, 2));
  const std::vector<std::pair<NodeId, NodeId>> bad{{0, 9}};
  CHECK_THROWS_AS(Graph(4, bad), InvalidArgument);
}

TEST_CASE("erdos-renyi mean degree") {
  const Graph g = generate_er(10000, 5.0, 1);
  CHECK(g.num_nodes() == 10000);
  // edge count is binomial(n(n-1)/2, p): mean 25000, sd ~158
  CHECK(std::abs(static_cast<double>(g.num_edges()) - 25000.0) < 5 * 158.0);
  const Graph complete = generate_er(30, 29.0, 2);
  CHECK(complete.num_edges() == 30 * 29 / 2);
  CHECK_THROWS_AS(generate_er(50, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(generate_er(10, 12.0, 1), InvalidArgument);
}

TEST_CASE("barabasi-albert degrees") {
  const std::size_t n = 10000, m = 3;
  const Graph g = generate_ba(n, m, 1);
  std::size_t min_deg = n;
  for (NodeId v = static_cast<NodeId>(m); v < n; ++v) min_deg = std::min(min_deg, g.degree(v));
  CHECK(min_deg >= m);
  // seed clique plus m edges per added node
  CHECK(g.num_edges() == m * (m - 1) / 2 + (n - m) * m);
  CHECK(g.max_degree() > 50);
  CHECK_THROWS_AS(generate_ba(3, 3, 1), InvalidArgument);
}

TEST_CASE("watts-strogatz keeps the edge count") {
  const Graph lattice = generate_ws(100, 6, 0.0, 1);
  for (NodeId v = 0; v < 100; ++v) CHECK(lattice.degree(v) == 6);
  const Graph g = generate_ws(2000, 6, 0.1, 1);
  CHECK(g.num_edges() == 6000);
}

TEST_CASE("generators are seed-deterministic") {
  CHECK(generate_er(500, 4.0, 9).fingerprint() == generate_er(500, 4.0, 9).fingerprint());
  CHECK(generate_er(500, 4.0, 9).fingerprint() != generate_er(500, 4.0, 10).fingerprint());
  CHECK(generate_ba(500, 2, 9).fingerprint() == generate_ba(500, 2, 9).fingerprint());
}

TEST_CASE("edge list round trip") {
  const Graph g = generate_er(200, 3.0, 4);
  std::stringstream ss;
  write_edge_list(g, ss);
  const Graph back = parse_edge_list(ss);
  CHECK(back.num_nodes() == g.num_nodes());
  CHECK(back.fingerprint() == g.fingerprint());

  std::stringstream plain("# comment\n10 20\n20 30\n\n30 10\n");
  const Graph tri = parse_edge_list(plain);
  CHECK(tri.num_nodes() == 3);
  CHECK(tri.num_edges() == 3);

  std::stringstream broken("1 2\n3 x\n");
  try {
    parse_edge_list(broken);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("laplacian is symmetric with zero row sums") {
  const Graph g = generate_ba(300, 2, 3);
  const SparseMatrix L = laplacian(g);
  for (std::size_t r = 0; r < L.n; ++r) {
    double s = 0.0;
    for (std::size_t q = L.row_ptr[r]; q < L.row_ptr[r + 1]; ++q) {
      s += L.val[q];
      CHECK(L.at(L.col[q], r) == L.val[q]);
    }
    CHECK(s == 0.0);
    CHECK(L.at(r, r) == static_cast<double>(g.degree(static_cast<NodeId>(r))));
  }
  std::vector<double> ones(L.n, 1.0), y(L.n);
  L.multiply(ones, y);
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("relabeling preserves structure") {
  const Graph g = generate_er(50, 4.0, 5);
  std::vector<NodeId> perm(50);
  for (NodeId i = 0; i < 50; ++i) perm[i] = (i * 17 + 3) % 50;
  const Graph h = g.relabeled(perm);
  CHECK(h.num_edges() == g.num_edges());
  for (auto [u, v] : g.edges()) CHECK(h.has_edge(perm[u], perm[v]));
}

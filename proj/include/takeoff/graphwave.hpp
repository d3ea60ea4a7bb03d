#pragma once

// Structural node embeddings from heat-kernel wavelets. Column a of the
// wavelet matrix Psi = exp(-s L) is the heat received by every node from a
// unit impulse at a; each column is summarised by its empirical
// characteristic function sampled at a fixed set of points.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "takeoff/netgen.hpp"

namespace takeoff {

struct WaveletConfig {
  std::optional<double> scale;  // unset: default_scale(graph)
  std::size_t cheb_order = 40;
  std::vector<double> sample_points = evenly_spaced(25, 100.0);

  static std::vector<double> evenly_spaced(std::size_t d, double t_max);

  void validate() const;
  std::size_t embedding_dim() const noexcept { return 2 * sample_points.size(); }
  /// Stable text key including the resolved scale.
  std::string fingerprint(double resolved_scale) const;
};

/// Smallest non-zero Laplacian eigenvalue, estimated by Lanczos iteration on
/// the complement of the null space. Returns 0 for edgeless graphs.
double estimate_lambda2(const Graph& g, std::size_t iterations = 120);

/// 0.85 * sqrt(ln 2 * ln 3) / lambda2 (1.0 when lambda2 is 0).
double default_scale(const Graph& g);

/// Dense n x n matrix; entry (m, a) is the heat at node m from node a.
struct WaveletMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  double operator()(std::size_t m, std::size_t a) const noexcept { return data[m * n + a]; }
};

/// Coefficients c_0..c_K of exp(-scale * lambda) on [0, lambda_max] in the
/// shifted Chebyshev basis; f ~ c_0 / 2 + sum_k c_k T_k(2 lambda / lambda_max - 1).
std::vector<double> chebyshev_heat_coefficients(double scale, double lambda_max, std::size_t order);

/// Upper bound on the largest Laplacian eigenvalue: max over edges of
/// deg(u) + deg(v), never above 2 * max degree.
double laplacian_spectral_bound(const Graph& g);

/// Psi by Chebyshev expansion on [0, laplacian_spectral_bound(g)].
WaveletMatrix heat_wavelets_chebyshev(const Graph& g, double scale, std::size_t order);

/// Psi by dense symmetric eigendecomposition (test oracle, small graphs).
WaveletMatrix heat_wavelets_exact(const Graph& g, double scale, std::size_t dense_limit = 500);

/// Row-major n x dim embedding matrix; row a = (Re phi_a(t_1), Im phi_a(t_1), ...).
struct EmbeddingMatrix {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t a) const noexcept { return {data.data() + a * dim, dim}; }
  std::span<double> row(std::size_t a) noexcept { return {data.data() + a * dim, dim}; }
};

/// Characteristic-function rows for every column of a given wavelet matrix.
EmbeddingMatrix characteristic_embedding(const WaveletMatrix& psi, std::span<const double> points);

/// Chebyshev wavelets and characteristic functions, processed in column
/// blocks so the full Psi is never materialised.
EmbeddingMatrix embed_nodes(const Graph& g, const WaveletConfig& config, std::size_t workers = 1);

/// `node_id,e_1,...,e_2d` rows behind a format header.
void write_embedding_csv(const EmbeddingMatrix& e, std::ostream& out);

/// Binary cache: magic, version, graph fingerprint, config fingerprint, data.
void save_embedding_cache(const EmbeddingMatrix& e, const Graph& g, const std::string& config_fp,
                          const std::string& path);
/// Returns nullopt when the file is absent; throws FormatError on mismatch.
std::optional<EmbeddingMatrix> load_embedding_cache(const Graph& g, const std::string& config_fp,
                                                    const std::string& path);

/// Computes embeddings once per (graph, config) and keeps them in `dir`.
EmbeddingMatrix cached_embedding(const Graph& g, const WaveletConfig& config, const std::string& dir,
                                 std::size_t workers = 1);

}  // namespace takeoff

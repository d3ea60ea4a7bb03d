#include "takeoff/graphwave.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "takeoff/error.hpp"
#include "takeoff/rng.hpp"

namespace takeoff {

std::vector<double> WaveletConfig::evenly_spaced(std::size_t d, double t_max) {
  std::vector<double> pts(d);
  for (std::size_t j = 0; j < d; ++j) pts[j] = d == 1 ? 0.0 : t_max * static_cast<double>(j) / static_cast<double>(d - 1);
  return pts;
}

void WaveletConfig::validate() const {
  if (scale && !(*scale > 0.0 && std::isfinite(*scale))) throw InvalidArgument("wavelet scale must be > 0");
  if (cheb_order < 2) throw InvalidArgument("Chebyshev order must be >= 2");
  if (sample_points.empty()) throw InvalidArgument("need at least one sample point");
  for (double t : sample_points)
    if (!std::isfinite(t)) throw InvalidArgument("sample points must be finite");
}

std::string WaveletConfig::fingerprint(double resolved_scale) const {
  std::ostringstream os;
  os << std::hexfloat << "s=" << resolved_scale << ";K=" << cheb_order << ";t=";
  for (double t : sample_points) os << t << ',';
  return os.str();
}

namespace {

// Per-node component ids (connected components).
std::vector<std::size_t> components(const Graph& g, std::size_t& count) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> comp(n, SIZE_MAX);
  std::vector<NodeId> stack;
  count = 0;
  for (NodeId s = 0; s < n; ++s) {
    if (comp[s] != SIZE_MAX) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      for (NodeId w : g.neighbors(v))
        if (comp[w] == SIZE_MAX) {
          comp[w] = count;
          stack.push_back(w);
        }
    }
    ++count;
  }
  return comp;
}

}  // namespace

double estimate_lambda2(const Graph& g, std::size_t iterations) {
  const std::size_t n = g.num_nodes();
  if (g.num_edges() == 0) return 0.0;
  std::size_t ncomp = 0;
  const auto comp = components(g, ncomp);
  std::vector<double> comp_size(ncomp, 0.0);
  for (auto c : comp) comp_size[c] += 1.0;
  // Removes the Laplacian null space (component-wise constants).
  auto deflate = [&](std::vector<double>& x) {
    std::vector<double> mean(ncomp, 0.0);
    for (std::size_t v = 0; v < n; ++v) mean[comp[v]] += x[v];
    for (std::size_t c = 0; c < ncomp; ++c) mean[c] /= comp_size[c];
    for (std::size_t v = 0; v < n; ++v) x[v] -= mean[comp[v]];
  };
  auto norm = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
  };

  const SparseMatrix L = laplacian(g);
  const std::size_t steps = std::min(iterations, n - ncomp);
  if (steps == 0) return 0.0;
  RandomStream rng(0x4C414E43ull, n);
  std::vector<std::vector<double>> basis;
  std::vector<double> q(n);
  for (auto& v : q) v = rng.uniform() - 0.5;
  deflate(q);
  double nq = norm(q);
  for (auto& v : q) v /= nq;

  std::vector<double> alpha, beta;
  std::vector<double> w(n);
  for (std::size_t k = 0; k < steps; ++k) {
    basis.push_back(q);
    L.multiply(q, w);
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) a += w[i] * q[i];
    alpha.push_back(a);
    // full reorthogonalisation against the basis and the null space
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += w[i] * b[i];
        for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
      }
      deflate(w);
    }
    const double b = norm(w);
    if (k + 1 == steps || b < 1e-10) break;
    beta.push_back(b);
    for (std::size_t i = 0; i < n; ++i) q[i] = w[i] / b;
  }
  const auto m = static_cast<Eigen::Index>(alpha.size());
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    T(i, i) = alpha[i];
    if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues()(0));
}

double default_scale(const Graph& g) {
  const double lambda2 = estimate_lambda2(g);
  if (!(lambda2 > 1e-12)) return 1.0;
  return 0.85 * std::sqrt(std::numbers::ln2 * std::log(3.0)) / lambda2;
}

double laplacian_spectral_bound(const Graph& g) {
  std::size_t best = 0;
  for (auto [u, v] : g.edges()) best = std::max(best, g.degree(u) + g.degree(v));
  return static_cast<double>(best);
}

std::vector<double> chebyshev_heat_coefficients(double scale, double lambda_max, std::size_t order) {
  const std::size_t m = std::max<std::size_t>(order + 1, 64) * 2;
  std::vector<double> c(order + 1, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double theta = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    const double lambda = (std::cos(theta) + 1.0) * lambda_max / 2.0;
    const double f = std::exp(-scale * lambda);
    for (std::size_t k = 0; k <= order; ++k) c[k] += f * std::cos(static_cast<double>(k) * theta);
  }
  for (auto& v : c) v *= 2.0 / static_cast<double>(m);
  return c;
}

namespace {

struct ChebyshevOperator {
  SparseMatrix shifted;  // 2 L / lambda_max - I
  std::vector<double> coeffs;
};

ChebyshevOperator make_operator(const Graph& g, double scale, std::size_t order) {
  double lambda_max = laplacian_spectral_bound(g);
  if (lambda_max <= 0.0) lambda_max = 1.0;
  ChebyshevOperator op{laplacian(g), chebyshev_heat_coefficients(scale, lambda_max, order)};
  for (std::size_t r = 0; r < op.shifted.n; ++r) {
    for (std::size_t p = op.shifted.row_ptr[r]; p < op.shifted.row_ptr[r + 1]; ++p) {
      op.shifted.val[p] *= 2.0 / lambda_max;
      if (op.shifted.col[p] == r) op.shifted.val[p] -= 1.0;
    }
  }
  return op;
}

// Columns [first, first + width) of Psi as a row-major n x width block.
void wavelet_block(const ChebyshevOperator& op, std::size_t first, std::size_t width, std::vector<double>& out,
                   std::vector<double>& t0, std::vector<double>& t1, std::vector<double>& t2) {
  const std::size_t n = op.shifted.n;
  const auto& c = op.coeffs;
  t0.assign(n * width, 0.0);
  for (std::size_t j = 0; j < width; ++j) t0[(first + j) * width + j] = 1.0;
  out.assign(n * width, 0.0);
  for (std::size_t i = 0; i < n * width; ++i) out[i] = 0.5 * c[0] * t0[i];
  t1.resize(n * width);
  op.shifted.multiply_block(t0, t1, width);
  for (std::size_t i = 0; i < n * width; ++i) out[i] += c[1] * t1[i];
  t2.resize(n * width);
  for (std::size_t k = 2; k < c.size(); ++k) {
    op.shifted.multiply_block(t1, t2, width);
    for (std::size_t i = 0; i < n * width; ++i) {
      t2[i] = 2.0 * t2[i] - t0[i];
      out[i] += c[k] * t2[i];
    }
    std::swap(t0, t1);
    std::swap(t1, t2);
  }
}

void characteristic_rows(const std::vector<double>& block, std::size_t n, std::size_t first, std::size_t width,
                         std::span<const double> points, EmbeddingMatrix& e) {
  const double inv_n = 1.0 / static_cast<double>(n);
  double t_max = 0.0;
  for (double t : points) t_max = std::max(t_max, std::abs(t));
  // Entries with |t * psi| < 1e-3 for every sample point go through a Taylor
  // series in power sums (truncation error below 1e-20 per entry).
  const double small = t_max > 0.0 ? 1e-3 / t_max : std::numeric_limits<double>::infinity();
  std::vector<double> large;
  for (std::size_t j = 0; j < width; ++j) {
    large.clear();
    double count = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0, p4 = 0.0, p5 = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      const double x = block[m * width + j];
      if (std::abs(x) < small) {
        const double x2 = x * x;
        count += 1.0;
        p1 += x;
        p2 += x2;
        p3 += x2 * x;
        p4 += x2 * x2;
        p5 += x2 * x2 * x;
      } else {
        large.push_back(x);
      }
    }
    auto row = e.row(first + j);
    for (std::size_t p = 0; p < points.size(); ++p) {
      const double t = points[p];
      const double t2 = t * t;
      double re = count - t2 * p2 / 2.0 + t2 * t2 * p4 / 24.0;
      double im = t * p1 - t2 * t * p3 / 6.0 + t2 * t2 * t * p5 / 120.0;
      for (double x : large) {
        re += std::cos(t * x);
        im += std::sin(t * x);
      }
      row[2 * p] = re * inv_n;
      row[2 * p + 1] = im * inv_n;
    }
  }
}

}  // namespace

WaveletMatrix heat_wavelets_chebyshev(const Graph& g, double scale, std::size_t order) {
  if (order < 2) throw InvalidArgument("Chebyshev order must be >= 2");
  const std::size_t n = g.num_nodes();
  const auto op = make_operator(g, scale, order);
  WaveletMatrix psi{n, {}};
  std::vector<double> t0, t1, t2;
  wavelet_block(op, 0, n, psi.data, t0, t1, t2);
  return psi;
}

WaveletMatrix heat_wavelets_exact(const Graph& g, double scale, std::size_t dense_limit) {
  const std::size_t n = g.num_nodes();
  if (n > dense_limit) throw InvalidArgument("graph exceeds the dense eigendecomposition limit");
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(ni, ni);
  for (NodeId v = 0; v < n; ++v) {
    L(v, v) = static_cast<double>(g.degree(v));
    for (NodeId w : g.neighbors(v)) L(v, w) = -1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  const Eigen::VectorXd heat = (-scale * es.eigenvalues().array()).exp();
  const Eigen::MatrixXd psi = es.eigenvectors() * heat.asDiagonal() * es.eigenvectors().transpose();
  WaveletMatrix out{n, std::vector<double>(n * n)};
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t a = 0; a < n; ++a) out.data[m * n + a] = psi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(a));
  return out;
}

EmbeddingMatrix characteristic_embedding(const WaveletMatrix& psi, std::span<const double> points) {
  EmbeddingMatrix e{psi.n, 2 * points.size(), std::vector<double>(psi.n * 2 * points.size())};
  characteristic_rows(psi.data, psi.n, 0, psi.n, points, e);
  return e;
}

EmbeddingMatrix embed_nodes(const Graph& g, const WaveletConfig& config, std::size_t workers) {
  config.validate();
  const std::size_t n = g.num_nodes();
  const double scale = config.scale ? *config.scale : default_scale(g);
  const auto op = make_operator(g, scale, config.cheb_order);
  EmbeddingMatrix e{n, config.embedding_dim(), std::vector<double>(n * config.embedding_dim())};

  constexpr std::size_t kBlock = 64;
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, nblocks);
  auto work = [&](std::size_t w) {
    std::vector<double> block, t0, t1, t2;
    for (std::size_t b = w; b < nblocks; b += workers) {
      const std::size_t first = b * kBlock;
      const std::size_t width = std::min(kBlock, n - first);
      wavelet_block(op, first, width, block, t0, t1, t2);
      characteristic_rows(block, n, first, width, config.sample_points, e);
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return e;
}

void write_embedding_csv(const EmbeddingMatrix& e, std::ostream& out) {
  out << "# format: takeoff-embedding/1\nnode_id";
  for (std::size_t j = 0; j < e.dim; ++j) out << ",e_" << j + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t a = 0; a < e.n; ++a) {
    out << a;
    for (double v : e.row(a)) out << ',' << v;
    out << '\n';
  }
}

namespace {

constexpr char kCacheMagic[8] = {'T', 'O', 'G', 'W', 'C', 'A', 'C', 'H'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated embedding cache");
  return v;
}

}  // namespace

void save_embedding_cache(const EmbeddingMatrix& e, const Graph& g, const std::string& config_fp,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embedding cache: " + path);
  out.write(kCacheMagic, sizeof kCacheMagic);
  put(out, kCacheVersion);
  put(out, g.fingerprint());
  put(out, static_cast<std::uint64_t>(config_fp.size()));
  out.write(config_fp.data(), static_cast<std::streamsize>(config_fp.size()));
  put(out, static_cast<std::uint64_t>(e.n));
  put(out, static_cast<std::uint64_t>(e.dim));
  out.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

std::optional<EmbeddingMatrix> load_embedding_cache(const Graph& g, const std::string& config_fp,
                                                    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof kCacheMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) throw FormatError("not an embedding cache: " + path);
  if (get<std::uint32_t>(in) != kCacheVersion) throw FormatError("embedding cache version mismatch");
  if (get<std::uint64_t>(in) != g.fingerprint()) throw FormatError("embedding cache belongs to another graph");
  const auto len = get<std::uint64_t>(in);
  std::string fp(len, '\0');
  in.read(fp.data(), static_cast<std::streamsize>(len));
  if (fp != config_fp) throw FormatError("embedding cache config mismatch");
  EmbeddingMatrix e;
  e.n = get<std::uint64_t>(in);
  e.dim = get<std::uint64_t>(in);
  if (e.n != g.num_nodes()) throw FormatError("embedding cache node count mismatch");
  e.data.resize(e.n * e.dim);
  in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!in) throw FormatError("truncated embedding cache");
  return e;
}

EmbeddingMatrix cached_embedding(const Graph& g, const WaveletConfig& config, const std::string& dir,
                                 std::size_t workers) {
  WaveletConfig resolved = config;
  if (!resolved.scale) resolved.scale = default_scale(g);
  const std::string fp = resolved.fingerprint(*resolved.scale);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : fp) h = (h ^ ch) * 0x100000001B3ull;
  std::ostringstream name;
  name << g.fingerprint_hex() << '-' << std::hex << std::setw(16) << std::setfill('0') << h << ".gwc";
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name.str()).string();
  if (auto hit = load_embedding_cache(g, fp, path)) return std::move(*hit);
  auto e = embed_nodes(g, resolved, workers);
  save_embedding_cache(e, g, fp, path);
  return e;
}

}  // namespace takeoff

#include "dsk/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#ifdef __AVX2__
#include <immintrin.h>
// glibc libmvec, 4-wide AVX2 exp.
extern "C" __m256d _ZGVdN4v_exp(__m256d);
#endif

#include "dsk/binary_io.hpp"
#include "dsk/errors.hpp"

namespace dsk::ot {
namespace {

// exp() of anything below this is exactly 0 in double precision.
constexpr double kUnderflow = -746.0;
// Floor for log-sum-exp terms: exp(-700) cannot change a sum that is at least
// 1, and staying in the normal range keeps the vector exp off its slow path.
constexpr double kExpFloor = -700.0;

double half_sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return 0.5 * s;
}

// sum_j exp(a_j) for a_j <= 0.
double sum_exp(const double* a, std::size_t len) {
  std::size_t j = 0;
  double s = 0.0;
#ifdef __AVX2__
  __m256d acc = _mm256_setzero_pd();
  for (; j + 4 <= len; j += 4) acc = _mm256_add_pd(acc, _ZGVdN4v_exp(_mm256_loadu_pd(a + j)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
#endif
  for (; j < len; ++j) s += std::exp(a[j]);
  return s;
}

// buf_j = pot_j - cost_j; returns max_j buf_j.
double shifted_potentials(const double* cost, const std::vector<double>& pot, std::vector<double>& buf) {
  const std::size_t len = pot.size();
  buf.resize(len);
  std::size_t j = 0;
  double mx = -std::numeric_limits<double>::infinity();
#ifdef __AVX2__
  __m256d vmx = _mm256_set1_pd(mx);
  for (; j + 4 <= len; j += 4) {
    const __m256d v = _mm256_sub_pd(_mm256_loadu_pd(pot.data() + j), _mm256_loadu_pd(cost + j));
    _mm256_storeu_pd(buf.data() + j, v);
    vmx = _mm256_max_pd(vmx, v);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, vmx);
  mx = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
#endif
  for (; j < len; ++j) {
    buf[j] = pot[j] - cost[j];
    mx = std::max(mx, buf[j]);
  }
  return mx;
}

// -eps * log( (1/len) sum_j exp((pot_j - c_j) / eps) ) for one row of costs.
double softmin(const double* cost, const std::vector<double>& pot, double eps, std::vector<double>& buf) {
  const std::size_t len = pot.size();
  const double mx = shifted_potentials(cost, pot, buf);
  const double inv = 1.0 / eps;
  for (std::size_t j = 0; j < len; ++j) buf[j] = std::max((buf[j] - mx) * inv, kExpFloor);
  return -(mx + eps * (std::log(sum_exp(buf.data(), len)) - std::log(static_cast<double>(len))));
}

void parallel_rows(std::size_t rows, unsigned threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, rows));
  if (workers == 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (rows + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(rows, b + chunk);
    if (b < e) pool.emplace_back(fn, b, e);
  }
}

// Cost rows either from a materialized matrix or recomputed into scratch.
class CostRows {
 public:
  CostRows(const double* a, std::size_t na, const double* b, std::size_t nb, std::size_t dim,
           bool materialize)
      : a_(a), b_(b), nb_(nb), dim_(dim) {
    if (materialize) {
      full_.resize(na * nb);
      for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) full_[i * nb + j] = half_sq_dist(a + i * dim, b + j * dim, dim);
      }
    }
  }

  const double* row(std::size_t i, std::vector<double>& scratch) const {
    if (!full_.empty()) return full_.data() + i * nb_;
    scratch.resize(nb_);
    for (std::size_t j = 0; j < nb_; ++j) scratch[j] = half_sq_dist(a_ + i * dim_, b_ + j * dim_, dim_);
    return scratch.data();
  }

 private:
  const double* a_;
  const double* b_;
  std::size_t nb_, dim_;
  std::vector<double> full_;
};

void half_update(const CostRows& rows, const std::vector<double>& pot, double eps,
                 std::vector<double>& out, unsigned threads) {
  parallel_rows(out.size(), threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> scratch, buf;
    for (std::size_t i = b; i < e; ++i) out[i] = softmin(rows.row(i, scratch), pot, eps, buf);
  });
}

}  // namespace

double EntropicTransport::cost(std::size_t i, std::size_t j) const {
  return half_sq_dist(source.data() + i * dim, target.data() + j * dim, dim);
}

double EntropicTransport::plan(std::size_t i, std::size_t j) const {
  return std::exp((f[i] + g[j] - cost(i, j)) / epsilon) /
         (static_cast<double>(n()) * static_cast<double>(m()));
}

std::vector<double> EntropicTransport::plan_matrix() const {
  std::vector<double> p(n() * m());
  for (std::size_t i = 0; i < n(); ++i) {
    for (std::size_t j = 0; j < m(); ++j) p[i * m() + j] = plan(i, j);
  }
  return p;
}

EntropicTransport sinkhorn_fit(std::span<const double> source, std::span<const double> target,
                               std::size_t dim, const SinkhornOptions& opts) {
  if (!(opts.epsilon > 0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (dim == 0 || source.size() % dim != 0 || target.size() % dim != 0) {
    throw std::invalid_argument("sinkhorn: sample arrays are not multiples of dimension " +
                                std::to_string(dim));
  }
  const std::size_t n = source.size() / dim, m = target.size() / dim;
  if (n == 0 || m == 0) throw std::invalid_argument("sinkhorn: empty sample set");
  for (double v : source) {
    if (!std::isfinite(v)) throw NumericalError("sinkhorn: non-finite source sample");
  }
  for (double v : target) {
    if (!std::isfinite(v)) throw NumericalError("sinkhorn: non-finite target sample");
  }

  EntropicTransport t;
  t.epsilon = opts.epsilon;
  t.dim = dim;
  t.source.assign(source.begin(), source.end());
  t.target.assign(target.begin(), target.end());
  t.f.assign(n, 0.0);
  t.g.assign(m, 0.0);

  const bool materialize = n * m <= opts.max_materialized;
  CostRows by_source(t.source.data(), n, t.target.data(), m, dim, materialize);
  CostRows by_target(t.target.data(), m, t.source.data(), n, dim, materialize);

  const double eps = opts.epsilon;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> f_next(n);
  t.marginal_error = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    half_update(by_target, t.f, eps, t.g, opts.threads);
    half_update(by_source, t.g, eps, f_next, opts.threads);
    // With g just updated the column marginals are exact, and row i of the
    // plan sums to exp((f_i - f_next_i)/eps)/n.
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::abs(std::exp((t.f[i] - f_next[i]) / eps) - 1.0) * inv_n;
    if (!std::isfinite(err)) {
      throw NumericalError("sinkhorn: non-finite marginal error at iteration " + std::to_string(it));
    }
    t.marginal_error = err;
    t.iterations_run = it;
    if (opts.history_every && it % opts.history_every == 0) t.error_history.push_back(err);
    if (err < opts.tol) break;
    if (it < opts.max_iters) t.f.swap(f_next);
  }
  return t;
}

std::vector<double> barycentric_map(const EntropicTransport& t, std::span<const double> y) {
  if (y.size() != t.dim) {
    throw std::invalid_argument("barycentric_map: sample has dimension " + std::to_string(y.size()) +
                                ", transport expects " + std::to_string(t.dim));
  }
  const std::size_t m = t.m(), d = t.dim;
  std::vector<double> logits(m);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    logits[j] = (t.g[j] - half_sq_dist(y.data(), t.target.data() + j * d, d)) / t.epsilon;
    mx = std::max(mx, logits[j]);
  }
  std::vector<double> out(d, 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double a = logits[j] - mx;
    if (a <= kUnderflow) continue;
    const double w = std::exp(a);
    z += w;
    const double* tj = t.target.data() + j * d;
    for (std::size_t k = 0; k < d; ++k) out[k] += w * tj[k];
  }
  for (double& v : out) v /= z;
  return out;
}

SnapshotDataset debias_dataset(const EntropicTransport& t, const SnapshotDataset& ds, unsigned threads) {
  if (ds.n_grid != t.dim) {
    throw std::invalid_argument("debias_dataset: dataset grid " + std::to_string(ds.n_grid) +
                                " does not match transport dimension " + std::to_string(t.dim));
  }
  std::vector<double> values(ds.values.size());
  parallel_rows(ds.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const auto mapped = barycentric_map(t, ds.snapshot(s));
      std::copy(mapped.begin(), mapped.end(), values.begin() + static_cast<long>(s * t.dim));
    }
  });
  auto meta = nlohmann::json::parse(ds.metadata);
  meta["debiased"] = {{"epsilon", t.epsilon},
                      {"n_source", t.n()},
                      {"n_target", t.m()},
                      {"iterations", t.iterations_run},
                      {"marginal_error", t.marginal_error}};
  return SnapshotDataset(ds.n_grid, std::move(values), meta.dump());
}

std::string encode_transport(const EntropicTransport& t) {
  io::Writer w;
  w.magic("DOTM");
  w.f64(t.epsilon);
  w.u32(static_cast<std::uint32_t>(t.n()));
  w.u32(static_cast<std::uint32_t>(t.m()));
  w.u32(static_cast<std::uint32_t>(t.dim));
  w.f64s(t.f);
  w.f64s(t.g);
  w.f64s(t.source);
  w.f64s(t.target);
  return w.buffer();
}

EntropicTransport decode_transport(std::string bytes, const std::string& what) {
  io::Reader r(std::move(bytes), what);
  r.expect_magic("DOTM");
  EntropicTransport t;
  t.epsilon = r.f64();
  const std::size_t n = r.u32(), m = r.u32();
  t.dim = r.u32();
  if (!(t.epsilon > 0) || t.dim == 0) throw std::runtime_error(what + ": invalid header");
  t.f = r.f64s(n);
  t.g = r.f64s(m);
  t.source = r.f64s(n * t.dim);
  t.target = r.f64s(m * t.dim);
  r.expect_end();
  return t;
}

void save_transport(const std::filesystem::path& path, const EntropicTransport& t) {
  io::write_file(path, encode_transport(t));
}

EntropicTransport load_transport(const std::filesystem::path& path) {
  return decode_transport(io::read_file(path), path.string());
}

}  // namespace dsk::ot

#include "dsk/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsk/binary_io.hpp"

namespace dsk::baselines {
namespace {

double keys(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Linear-interpolated quantiles of sorted data at q/Q.
void quantiles(std::vector<double>& v, std::size_t levels, double* out) {
  std::sort(v.begin(), v.end());
  const double last = static_cast<double>(v.size() - 1);
  for (std::size_t q = 0; q <= levels; ++q) {
    const double pos = last * static_cast<double>(q) / static_cast<double>(levels);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    out[q] = v[lo] + w * (v[hi] - v[lo]);
  }
}

}  // namespace

std::vector<double> cubic_upsample(std::span<const double> y, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("cubic_upsample: factor must be positive");
  if (y.empty()) throw std::invalid_argument("cubic_upsample: empty input");
  const std::size_t n = y.size();
  const auto len = static_cast<long>(n);
  std::vector<double> out(n * factor);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t base = i / factor;
    const double t = static_cast<double>(i % factor) / static_cast<double>(factor);
    double s = 0.0;
    for (long m = -1; m <= 2; ++m) {
      const long j = ((static_cast<long>(base) + m) % len + len) % len;
      s += y[static_cast<std::size_t>(j)] * keys(t - static_cast<double>(m));
    }
    out[i] = s;
  }
  return out;
}

QuantileTable fit_quantile_table(std::span<const double> source, std::span<const double> reference, std::size_t dim,
                                 std::size_t levels) {
  if (dim == 0 || source.size() % dim != 0 || reference.size() % dim != 0) {
    throw std::invalid_argument("fit_quantile_table: sample arrays are not multiples of dimension");
  }
  if (levels == 0) throw std::invalid_argument("fit_quantile_table: need at least one quantile level");
  const std::size_t ns = source.size() / dim, nr = reference.size() / dim;
  if (ns < 2 || nr < 2) throw std::invalid_argument("fit_quantile_table: need at least two samples per set");
  QuantileTable qt{levels, dim, std::vector<double>(dim * (levels + 1)), std::vector<double>(dim * (levels + 1))};
  std::vector<double> col;
  for (std::size_t p = 0; p < dim; ++p) {
    col.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) col[i] = source[i * dim + p];
    quantiles(col, levels, qt.source.data() + p * (levels + 1));
    col.resize(nr);
    for (std::size_t i = 0; i < nr; ++i) col[i] = reference[i * dim + p];
    quantiles(col, levels, qt.reference.data() + p * (levels + 1));
  }
  return qt;
}

std::vector<double> quantile_match(std::span<const double> x, const QuantileTable& qt, std::size_t* clamped) {
  if (x.size() != qt.dim) {
    throw std::invalid_argument("quantile_match: field length " + std::to_string(x.size()) +
                                " does not match table dimension " + std::to_string(qt.dim));
  }
  std::vector<double> out(x.size());
  for (std::size_t p = 0; p < x.size(); ++p) {
    const auto src = qt.source_row(p);
    const auto ref = qt.reference_row(p);
    const double v = x[p];
    if (clamped && (v < src.front() || v > src.back())) ++*clamped;
    const auto it = std::upper_bound(src.begin(), src.end(), v);
    long seg = static_cast<long>(it - src.begin()) - 1;
    seg = std::clamp(seg, 0L, static_cast<long>(qt.levels) - 1);
    out[p] = 0.5 * (ref[static_cast<std::size_t>(seg)] + ref[static_cast<std::size_t>(seg) + 1]);
  }
  return out;
}

std::vector<double> bcsd(std::span<const double> y, const QuantileTable& qt, std::size_t factor, std::size_t* clamped) {
  return quantile_match(cubic_upsample(y, factor), qt, clamped);
}

std::string encode_quantile_table(const QuantileTable& qt) {
  io::Writer w;
  w.magic("DQTB");
  w.u32(static_cast<std::uint32_t>(qt.levels));
  w.u32(static_cast<std::uint32_t>(qt.dim));
  w.f64s(qt.source);
  w.f64s(qt.reference);
  return w.buffer();
}

QuantileTable decode_quantile_table(std::string bytes, const std::string& what) {
  io::Reader r(std::move(bytes), what);
  r.expect_magic("DQTB");
  QuantileTable qt;
  qt.levels = r.u32();
  qt.dim = r.u32();
  if (qt.levels == 0 || qt.dim == 0) throw std::runtime_error(what + ": invalid header");
  qt.source = r.f64s(qt.dim * (qt.levels + 1));
  qt.reference = r.f64s(qt.dim * (qt.levels + 1));
  r.expect_end();
  return qt;
}

void save_quantile_table(const std::filesystem::path& path, const QuantileTable& qt) {
  io::write_file(path, encode_quantile_table(qt));
}

QuantileTable load_quantile_table(const std::filesystem::path& path) {
  return decode_quantile_table(io::read_file(path), path.string());
}

}  // namespace dsk::baselines

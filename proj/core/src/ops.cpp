#include "dsk/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dsk::ops {
namespace {

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape && t->tape() != tape) {
      throw std::invalid_argument("operands are recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

Tensor finish(Tensor out, std::initializer_list<const Tensor*> inputs, Tape::Backward fn) {
  Tape* tape = common_tape(inputs);
  if (!tape) return out;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor* t : inputs) ids.push_back(t->tracked() ? t->node() : -1);
  return tape->record(std::move(out), std::move(ids), std::move(fn));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_string(t.shape()));
  }
}

enum class Pairing { kEqual, kScalarLeft, kScalarRight };

Pairing pairing(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return Pairing::kEqual;
  if (a.size() == 1 && a.rank() == 0) return Pairing::kScalarLeft;
  if (b.size() == 1 && b.rank() == 0) return Pairing::kScalarRight;
  throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                              " vs " + shape_string(b.shape()));
}

// C += op(A) op(B), row-major; op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  // Parallelism lives at the sample level; keep BLAS single-threaded.
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), 1.0, c,
              static_cast<int>(n));
}

double erf_cdf(double x) { return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Pairing p = pairing(a, b, "add");
  const Tensor& big = p == Pairing::kScalarLeft ? b : a;
  Tensor out(big.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double av = p == Pairing::kScalarLeft ? a[0] : a[i];
    const double bv = p == Pairing::kScalarRight ? b[0] : b[i];
    o[i] = av + bv;
  }
  const int ia = a.node(), ib = b.node();
  return finish(std::move(out), {&a, &b}, [p, ia, ib](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    auto gb = tape.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[p == Pairing::kScalarLeft ? 0 : i] += g[i];
      if (!gb.empty()) gb[p == Pairing::kScalarRight ? 0 : i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Pairing p = pairing(a, b, "sub");
  const Tensor& big = p == Pairing::kScalarLeft ? b : a;
  Tensor out(big.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double av = p == Pairing::kScalarLeft ? a[0] : a[i];
    const double bv = p == Pairing::kScalarRight ? b[0] : b[i];
    o[i] = av - bv;
  }
  const int ia = a.node(), ib = b.node();
  return finish(std::move(out), {&a, &b}, [p, ia, ib](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    auto gb = tape.grad_of(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!ga.empty()) ga[p == Pairing::kScalarLeft ? 0 : i] += g[i];
      if (!gb.empty()) gb[p == Pairing::kScalarRight ? 0 : i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Pairing p = pairing(a, b, "mul");
  const Tensor& big = p == Pairing::kScalarLeft ? b : a;
  Tensor out(big.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double av = p == Pairing::kScalarLeft ? a[0] : a[i];
    const double bv = p == Pairing::kScalarRight ? b[0] : b[i];
    o[i] = av * bv;
  }
  const int ia = a.node(), ib = b.node();
  std::vector<double> av(a.data()), bv(b.data());
  return finish(std::move(out), {&a, &b},
                [p, ia, ib, av = std::move(av), bv = std::move(bv)](std::span<const double> g,
                                                                     Tape& tape) {
                  auto ga = tape.grad_of(ia);
                  auto gb = tape.grad_of(ib);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const std::size_t ai = p == Pairing::kScalarLeft ? 0 : i;
                    const std::size_t bi = p == Pairing::kScalarRight ? 0 : i;
                    if (!ga.empty()) ga[ai] += g[i] * bv[bi];
                    if (!gb.empty()) gb[bi] += g[i] * av[ai];
                  }
                });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * a[i];
  const int ia = a.node();
  return finish(std::move(out), {&a}, [ia, c](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + c;
  const int ia = a.node();
  return finish(std::move(out), {&a}, [ia](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const int ia = a.node();
  return finish(Tensor::scalar(s), {&a}, [ia](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    for (double& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.values()) s += v;
  const int ia = a.node();
  return finish(Tensor::scalar(s * inv), {&a}, [ia, inv](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    for (double& v : ga) v += g[0] * inv;
  });
}

Tensor sum_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  const int ia = a.node();
  std::vector<double> av(a.data());
  return finish(Tensor::scalar(s), {&a},
                [ia, av = std::move(av)](std::span<const double> g, Tape& tape) {
                  auto ga = tape.grad_of(ia);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * av[i] * g[0];
                });
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_values();
  std::vector<double> deriv(x.size());
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = x[i];
    const double cdf = erf_cdf(v);
    o[i] = v * cdf;
    deriv[i] = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
  }
  const int ix = x.node();
  return finish(std::move(out), {&x},
                [ix, deriv = std::move(deriv)](std::span<const double> g, Tape& tape) {
                  auto gx = tape.grad_of(ix);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv[i];
                });
}

Tensor conv1d_circular(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  require_rank(x, 2, "conv1d_circular(x)");
  require_rank(w, 3, "conv1d_circular(w)");
  require_rank(b, 1, "conv1d_circular(b)");
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw std::invalid_argument("conv1d_circular: weight " + shape_string(w.shape()) +
                                " does not match input " + shape_string(x.shape()));
  }
  if (b.dim(0) != cout) {
    throw std::invalid_argument("conv1d_circular: bias " + shape_string(b.shape()) +
                                " does not match weight " + shape_string(w.shape()));
  }
  if (k % 2 == 0) throw std::invalid_argument("conv1d_circular: kernel width must be odd");
  if (stride == 0 || len % stride != 0) {
    throw std::invalid_argument("conv1d_circular: length " + std::to_string(len) +
                                " not divisible by stride " + std::to_string(stride));
  }
  const std::size_t lout = len / stride;
  const std::size_t rows = cin * k;

  // Column matrix: col[ci*K + kk][l] = x[ci][(l*stride + kk - pad) mod len].
  std::vector<std::size_t> idx(k * lout);
  const long pad = static_cast<long>(k - 1) / 2;
  for (std::size_t kk = 0; kk < k; ++kk) {
    for (std::size_t l = 0; l < lout; ++l) {
      long j = (static_cast<long>(l * stride) + static_cast<long>(kk) - pad) % static_cast<long>(len);
      if (j < 0) j += static_cast<long>(len);
      idx[kk * lout + l] = static_cast<std::size_t>(j);
    }
  }
  std::vector<double> col(rows * lout);
  const double* xv = x.values().data();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double* dst = col.data() + (ci * k + kk) * lout;
      const double* src = xv + ci * len;
      const std::size_t* ix = idx.data() + kk * lout;
      for (std::size_t l = 0; l < lout; ++l) dst[l] = src[ix[l]];
    }
  }

  Tensor out({cout, lout});
  double* o = out.mutable_values().data();
  for (std::size_t co = 0; co < cout; ++co) std::fill(o + co * lout, o + (co + 1) * lout, b[co]);
  gemm(false, false, cout, lout, rows, w.values().data(), col.data(), o);

  const int ixn = x.node(), iwn = w.node(), ibn = b.node();
  if (!w.tracked()) std::vector<double>().swap(col);
  std::vector<double> ws = x.tracked() ? w.data() : std::vector<double>{};
  return finish(
      std::move(out), {&x, &w, &b},
      [=, col = std::move(col), ws = std::move(ws), idx = std::move(idx)](std::span<const double> g,
                                                                         Tape& tape) {
        auto gx = tape.grad_of(ixn);
        auto gw = tape.grad_of(iwn);
        auto gb = tape.grad_of(ibn);
        if (!gb.empty()) {
          for (std::size_t co = 0; co < cout; ++co) {
            double s = 0.0;
            for (std::size_t l = 0; l < lout; ++l) s += g[co * lout + l];
            gb[co] += s;
          }
        }
        if (!gw.empty()) gemm(false, true, cout, rows, lout, g.data(), col.data(), gw.data());
        if (!gx.empty()) {
          std::vector<double> gcol(rows * lout, 0.0);
          gemm(true, false, rows, lout, cout, ws.data(), g.data(), gcol.data());
          for (std::size_t ci = 0; ci < cin; ++ci) {
            double* dst = gx.data() + ci * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* src = gcol.data() + (ci * k + kk) * lout;
              const std::size_t* ix = idx.data() + kk * lout;
              for (std::size_t l = 0; l < lout; ++l) dst[ix[l]] += src[l];
            }
          }
        }
      });
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank(x, 2, "group_norm(x)");
  const std::size_t c = x.dim(0), len = x.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw std::invalid_argument("group_norm: " + std::to_string(c) +
                                " channels not divisible by " + std::to_string(groups) +
                                " groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw std::invalid_argument("group_norm: affine parameters must have shape [" +
                                std::to_string(c) + "], got " + shape_string(gamma.shape()) +
                                " and " + shape_string(beta.shape()));
  }
  const std::size_t per_group = (c / groups) * len;
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(groups);
  Tensor out(x.shape());
  auto o = out.mutable_values();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t begin = gi * per_group;
    double m = 0.0;
    for (std::size_t i = 0; i < per_group; ++i) m += x[begin + i];
    m /= static_cast<double>(per_group);
    double v = 0.0;
    for (std::size_t i = 0; i < per_group; ++i) {
      const double d = x[begin + i] - m;
      v += d * d;
    }
    v /= static_cast<double>(per_group);
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[gi] = is;
    for (std::size_t i = 0; i < per_group; ++i) xhat[begin + i] = (x[begin + i] - m) * is;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t l = 0; l < len; ++l) {
      o[ch * len + l] = gamma[ch] * xhat[ch * len + l] + beta[ch];
    }
  }
  const int ixn = x.node(), ign = gamma.node(), ibn = beta.node();
  std::vector<double> gam(gamma.data());
  return finish(
      std::move(out), {&x, &gamma, &beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std), gam = std::move(gam)](
          std::span<const double> g, Tape& tape) {
        auto gx = tape.grad_of(ixn);
        auto gg = tape.grad_of(ign);
        auto gbeta = tape.grad_of(ibn);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sg = 0.0, sb = 0.0;
          for (std::size_t l = 0; l < len; ++l) {
            sg += g[ch * len + l] * xhat[ch * len + l];
            sb += g[ch * len + l];
          }
          if (!gg.empty()) gg[ch] += sg;
          if (!gbeta.empty()) gbeta[ch] += sb;
        }
        if (gx.empty()) return;
        const double m = static_cast<double>(per_group);
        const std::size_t cpg = c / groups;
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t begin = gi * per_group;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t i = 0; i < per_group; ++i) {
            const std::size_t ch = gi * cpg + i / len;
            const double dxh = g[begin + i] * gam[ch];
            s1 += dxh;
            s2 += dxh * xhat[begin + i];
          }
          const double is = inv_std[gi];
          for (std::size_t i = 0; i < per_group; ++i) {
            const std::size_t ch = gi * cpg + i / len;
            const double dxh = g[begin + i] * gam[ch];
            gx[begin + i] += is / m * (m * dxh - s1 - xhat[begin + i] * s2);
          }
        }
      });
}

Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b) {
  require_rank(w, 2, "linear(w)");
  require_rank(x, 1, "linear(x)");
  require_rank(b, 1, "linear(b)");
  const std::size_t o = w.dim(0), in = w.dim(1);
  if (x.dim(0) != in || b.dim(0) != o) {
    throw std::invalid_argument("linear: weight " + shape_string(w.shape()) + ", input " +
                                shape_string(x.shape()) + ", bias " + shape_string(b.shape()) +
                                " are inconsistent");
  }
  Tensor out({o});
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < o; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < in; ++c) s += w[r * in + c] * x[c];
    ov[r] = s;
  }
  const int iw = w.node(), ix = x.node(), ib = b.node();
  std::vector<double> ws = x.tracked() ? w.data() : std::vector<double>{};
  std::vector<double> xs = w.tracked() ? x.data() : std::vector<double>{};
  return finish(std::move(out), {&w, &x, &b},
                [=, ws = std::move(ws), xs = std::move(xs)](std::span<const double> g,
                                                            Tape& tape) {
                  auto gw = tape.grad_of(iw);
                  auto gx = tape.grad_of(ix);
                  auto gb = tape.grad_of(ib);
                  for (std::size_t r = 0; r < o; ++r) {
                    if (!gb.empty()) gb[r] += g[r];
                    for (std::size_t c = 0; c < in; ++c) {
                      if (!gw.empty()) gw[r * in + c] += g[r] * xs[c];
                      if (!gx.empty()) gx[c] += g[r] * ws[r * in + c];
                    }
                  }
                });
}

Tensor add_channel_shift(const Tensor& x, const Tensor& shift) {
  require_rank(x, 2, "add_channel_shift(x)");
  require_rank(shift, 1, "add_channel_shift(shift)");
  const std::size_t c = x.dim(0), len = x.dim(1);
  if (shift.dim(0) != c) {
    throw std::invalid_argument("add_channel_shift: shift " + shape_string(shift.shape()) +
                                " does not match input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  auto o = out.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t l = 0; l < len; ++l) o[ch * len + l] = x[ch * len + l] + shift[ch];
  }
  const int ix = x.node(), is = shift.node();
  return finish(std::move(out), {&x, &shift}, [=](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_of(ix);
    auto gs = tape.grad_of(is);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        if (!gx.empty()) gx[ch * len + l] += g[ch * len + l];
        s += g[ch * len + l];
      }
      if (!gs.empty()) gs[ch] += s;
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_channels(a)");
  require_rank(b, 2, "concat_channels(b)");
  if (a.dim(1) != b.dim(1)) {
    throw std::invalid_argument("concat_channels: length mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
  const std::size_t na = a.size();
  std::vector<double> v(a.data());
  v.insert(v.end(), b.values().begin(), b.values().end());
  Tensor out({a.dim(0) + b.dim(0), a.dim(1)}, std::move(v));
  const int ia = a.node(), ib = b.node();
  return finish(std::move(out), {&a, &b}, [=](std::span<const double> g, Tape& tape) {
    auto ga = tape.grad_of(ia);
    auto gb = tape.grad_of(ib);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
  });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  require_rank(x, 2, "upsample_nearest(x)");
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const std::size_t c = x.dim(0), len = x.dim(1);
  Tensor out({c, len * factor});
  auto o = out.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t l = 0; l < len * factor; ++l) o[ch * len * factor + l] = x[ch * len + l / factor];
  }
  const int ix = x.node();
  return finish(std::move(out), {&x}, [=](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_of(ix);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t l = 0; l < len * factor; ++l) gx[ch * len + l / factor] += g[ch * len * factor + l];
    }
  });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices) {
  std::vector<double> v(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) {
      throw std::out_of_range("gather: index " + std::to_string(indices[i]) +
                              " out of range for shape " + shape_string(x.shape()));
    }
    v[i] = x[indices[i]];
  }
  Tensor out({indices.size()}, std::move(v));
  const int ix = x.node();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish(std::move(out), {&x},
                [ix, idx = std::move(idx)](std::span<const double> g, Tape& tape) {
                  auto gx = tape.grad_of(ix);
                  for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " +
                                shape_string(shape));
  }
  Tensor out(std::move(shape), x.data());
  const int ix = x.node();
  return finish(std::move(out), {&x}, [ix](std::span<const double> g, Tape& tape) {
    auto gx = tape.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace dsk::ops

#include "umafd/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace umafd::kernels {

void conv3d_forward_reference(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, std::span<double> y) {
  const auto [T, H, W] = g.in_dims;
  const auto [KT, KH, KW] = g.kernel;
  const std::size_t OT = g.out_dim(0), OH = g.out_dim(1), OW = g.out_dim(2);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t ot = 0; ot < OT; ++ot) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = b.empty() ? 0.0 : b[co];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t kt = 0; kt < KT; ++kt) {
              const long it = static_cast<long>(ot * g.stride[0] + kt) - static_cast<long>(g.pad(0));
              if (it < 0 || it >= static_cast<long>(T)) continue;
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad(1));
                if (ih < 0 || ih >= static_cast<long>(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const long iw = static_cast<long>(ow * g.stride[2] + kw) - static_cast<long>(g.pad(2));
                  if (iw < 0 || iw >= static_cast<long>(W)) continue;
                  const double xv = x[((ci * T + it) * H + ih) * W + iw];
                  const double wv = w[(((co * g.in_channels + ci) * KT + kt) * KH + kh) * KW + kw];
                  acc += xv * wv;
                }
              }
            }
          }
          y[((co * OT + ot) * OH + oh) * OW + ow] = acc;
        }
      }
    }
  }
}

void conv3d_backward_reference(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                               std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                               std::span<double> db) {
  const auto [T, H, W] = g.in_dims;
  const auto [KT, KH, KW] = g.kernel;
  const std::size_t OT = g.out_dim(0), OH = g.out_dim(1), OW = g.out_dim(2);
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t ot = 0; ot < OT; ++ot) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const double go = dy[((co * OT + ot) * OH + oh) * OW + ow];
          if (!db.empty()) db[co] += go;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t kt = 0; kt < KT; ++kt) {
              const long it = static_cast<long>(ot * g.stride[0] + kt) - static_cast<long>(g.pad(0));
              if (it < 0 || it >= static_cast<long>(T)) continue;
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad(1));
                if (ih < 0 || ih >= static_cast<long>(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const long iw = static_cast<long>(ow * g.stride[2] + kw) - static_cast<long>(g.pad(2));
                  if (iw < 0 || iw >= static_cast<long>(W)) continue;
                  const std::size_t xi = ((ci * T + it) * H + ih) * W + iw;
                  const std::size_t wi = (((co * g.in_channels + ci) * KT + kt) * KH + kh) * KW + kw;
                  dw[wi] += go * x[xi];
                  if (!dx.empty()) dx[xi] += go * w[wi];
                }
              }
            }
          }
        }
      }
    }
  }
}

void im2col(const Conv3dGeometry& g, std::span<const double> x, std::span<double> col) {
  const auto [T, H, W] = g.in_dims;
  const auto [KT, KH, KW] = g.kernel;
  const std::size_t OT = g.out_dim(0), OH = g.out_dim(1), OW = g.out_dim(2);
  const std::size_t P = g.out_volume();
  const std::size_t SW = g.stride[2];
  const long rows = static_cast<long>(g.patch_size());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    const std::size_t ci = static_cast<std::size_t>(r) / g.kernel_volume();
    std::size_t k = static_cast<std::size_t>(r) % g.kernel_volume();
    const std::size_t kw = k % KW;
    k /= KW;
    const std::size_t kh = k % KH;
    const std::size_t kt = k / KH;
    // valid output columns [lo, hi) for this kernel offset
    const long off = static_cast<long>(kw) - static_cast<long>(g.pad(2));
    std::size_t lo = 0;
    while (lo < OW && static_cast<long>(lo * SW) + off < 0) ++lo;
    std::size_t hi = OW;
    while (hi > lo && static_cast<long>((hi - 1) * SW) + off >= static_cast<long>(W)) --hi;
    double* out = col.data() + static_cast<std::size_t>(r) * P;
    const double* xc = x.data() + ci * T * H * W;
    for (std::size_t ot = 0; ot < OT; ++ot) {
      const long it = static_cast<long>(ot * g.stride[0] + kt) - static_cast<long>(g.pad(0));
      for (std::size_t oh = 0; oh < OH; ++oh) {
        const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad(1));
        double* orow = out + (ot * OH + oh) * OW;
        if (it < 0 || it >= static_cast<long>(T) || ih < 0 || ih >= static_cast<long>(H)) {
          std::fill(orow, orow + OW, 0.0);
          continue;
        }
        const double* xrow = xc + (static_cast<std::size_t>(it) * H + static_cast<std::size_t>(ih)) * W + off;
        std::fill(orow, orow + lo, 0.0);
        if (SW == 1) {
          std::copy(xrow + lo, xrow + hi, orow + lo);
        } else {
          for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] = xrow[ow * SW];
        }
        std::fill(orow + hi, orow + OW, 0.0);
      }
    }
  }
}

void col2im(const Conv3dGeometry& g, std::span<const double> col, std::span<double> dx) {
  const auto [T, H, W] = g.in_dims;
  const auto [KT, KH, KW] = g.kernel;
  const std::size_t OT = g.out_dim(0), OH = g.out_dim(1), OW = g.out_dim(2);
  const std::size_t P = g.out_volume();
  const std::size_t SW = g.stride[2];
  const long channels = static_cast<long>(g.in_channels);
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < channels; ++ci) {
    double* xc = dx.data() + static_cast<std::size_t>(ci) * T * H * W;
    std::fill(xc, xc + T * H * W, 0.0);
    for (std::size_t k = 0; k < g.kernel_volume(); ++k) {
      const std::size_t kw = k % KW, kh = (k / KW) % KH, kt = k / (KW * KH);
      const long off = static_cast<long>(kw) - static_cast<long>(g.pad(2));
      std::size_t lo = 0;
      while (lo < OW && static_cast<long>(lo * SW) + off < 0) ++lo;
      std::size_t hi = OW;
      while (hi > lo && static_cast<long>((hi - 1) * SW) + off >= static_cast<long>(W)) --hi;
      const double* in = col.data() + (static_cast<std::size_t>(ci) * g.kernel_volume() + k) * P;
      for (std::size_t ot = 0; ot < OT; ++ot) {
        const long it = static_cast<long>(ot * g.stride[0] + kt) - static_cast<long>(g.pad(0));
        if (it < 0 || it >= static_cast<long>(T)) continue;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad(1));
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          double* xrow = xc + (static_cast<std::size_t>(it) * H + static_cast<std::size_t>(ih)) * W + off;
          const double* crow = in + (ot * OH + oh) * OW;
          for (std::size_t ow = lo; ow < hi; ++ow) xrow[ow * SW] += crow[ow];
        }
      }
    }
  }
}

namespace {

constexpr std::size_t kTileTarget = 256;

// A tile is a run of whole output rows (fixed ot, oh) so that it has at most
// kTileTarget positions when a row fits.
struct Tiling {
  std::size_t rows_per_tile, tile, count;
};

Tiling tiling(const Conv3dGeometry& g) {
  const std::size_t OW = g.out_dim(2);
  const std::size_t rows = g.out_dim(0) * g.out_dim(1);
  const std::size_t per = std::max<std::size_t>(1, kTileTarget / OW);
  return {per, per * OW, (rows + per - 1) / per};
}

// Input rows split by column phase (j*SW + ph) so that strided reads in im2col
// become contiguous copies. Row (c, t, h) holds SW planes of `plane` values.
struct PhasedInput {
  const double* data;
  std::size_t plane, row;
  std::vector<double> storage;
};

PhasedInput phase_split(const Conv3dGeometry& g, const double* x) {
  const std::size_t W = g.in_dims[2], SW = g.stride[2];
  if (SW == 1) return {x, W, W, {}};
  const std::size_t plane = (W + SW - 1) / SW;
  const std::size_t nrows = g.in_channels * g.in_volume() / W;
  PhasedInput out{nullptr, plane, plane * SW, std::vector<double>(nrows * plane * SW, 0.0)};
  for (std::size_t r = 0; r < nrows; ++r) {
    const double* src = x + r * W;
    double* dst = out.storage.data() + r * out.row;
    for (std::size_t ph = 0; ph < SW; ++ph) {
      double* d = dst + ph * plane;
      for (std::size_t j = ph, q = 0; j < W; j += SW, ++q) d[q] = src[j];
    }
  }
  out.data = out.storage.data();
  return out;
}

// col[r][q] for output rows row0 .. row0+nrows, leading dimension ld.
void im2col_tile(const Conv3dGeometry& g, const PhasedInput& xin, std::size_t row0, std::size_t nrows, double* col,
                 std::size_t ld) {
  const auto [T, H, W] = g.in_dims;
  const auto [KT, KH, KW] = g.kernel;
  const std::size_t OH = g.out_dim(1), OW = g.out_dim(2);
  const std::size_t SW = g.stride[2];
  const long sw = static_cast<long>(SW);
  for (std::size_t r = 0; r < g.patch_size(); ++r) {
    const std::size_t ci = r / g.kernel_volume();
    std::size_t k = r % g.kernel_volume();
    const std::size_t kw = k % KW;
    k /= KW;
    const std::size_t kh = k % KH;
    const std::size_t kt = k / KH;
    const long off = static_cast<long>(kw) - static_cast<long>(g.pad(2));
    std::size_t lo = 0;
    while (lo < OW && static_cast<long>(lo * SW) + off < 0) ++lo;
    std::size_t hi = OW;
    while (hi > lo && static_cast<long>((hi - 1) * SW) + off >= static_cast<long>(W)) --hi;
    const long phase = ((off % sw) + sw) % sw;
    const long shift = static_cast<long>(phase) * static_cast<long>(xin.plane) + (off - phase) / sw;
    const double* xc = xin.data + ci * T * H * xin.row;
    for (std::size_t j = 0; j < nrows; ++j) {
      const std::size_t ot = (row0 + j) / OH, oh = (row0 + j) % OH;
      const long it = static_cast<long>(ot * g.stride[0] + kt) - static_cast<long>(g.pad(0));
      const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad(1));
      double* orow = col + r * ld + j * OW;
      if (it < 0 || it >= static_cast<long>(T) || ih < 0 || ih >= static_cast<long>(H)) {
        std::fill(orow, orow + OW, 0.0);
        continue;
      }
      const double* xrow = xc + (static_cast<std::size_t>(it) * H + static_cast<std::size_t>(ih)) * xin.row + shift;
      std::fill(orow, orow + lo, 0.0);
      std::copy(xrow + lo, xrow + hi, orow + lo);
      std::fill(orow + hi, orow + OW, 0.0);
    }
  }
}

// Eight doubles; the compiler maps this onto whatever vector width exists.
typedef double v8 __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof v); }

template <std::size_t B>
void gemm_block(const double* a, std::size_t as, std::size_t ak, std::size_t K, const double* rows, std::size_t ld,
                std::size_t n, double* const* out) {
  std::size_t q = 0;
  // B rows x 16 columns stay in registers across the k loop
  for (; q + 16 <= n; q += 16) {
    v8 acc0[B], acc1[B];
    for (std::size_t i = 0; i < B; ++i) {
      acc0[i] = load8(out[i] + q);
      acc1[i] = load8(out[i] + q + 8);
    }
    for (std::size_t k = 0; k < K; ++k) {
      const v8 s0 = load8(rows + k * ld + q);
      const v8 s1 = load8(rows + k * ld + q + 8);
      for (std::size_t i = 0; i < B; ++i) {
        const double c = a[i * as + k * ak];
        acc0[i] += c * s0;
        acc1[i] += c * s1;
      }
    }
    for (std::size_t i = 0; i < B; ++i) {
      store8(out[i] + q, acc0[i]);
      store8(out[i] + q + 8, acc1[i]);
    }
  }
  if (q == n) return;
  for (std::size_t k = 0; k < K; ++k) {
    const double* src = rows + k * ld;
    for (std::size_t i = 0; i < B; ++i) {
      const double c = a[i * as + k * ak];
      for (std::size_t r = q; r < n; ++r) out[i][r] += c * src[r];
    }
  }
}

inline double reduce8(v8 a) { return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7])); }

// Four dot products of rows x, x+xs, x+2xs, x+3xs against y; each one sums in
// the same order as dot().
void dot4(const double* x, std::size_t xs, const double* y, std::size_t n, double* out, std::size_t os) {
  v8 a0{}, a1{}, a2{}, a3{};
  std::size_t q = 0;
  for (; q + 8 <= n; q += 8) {
    const v8 yv = load8(y + q);
    a0 += load8(x + q) * yv;
    a1 += load8(x + xs + q) * yv;
    a2 += load8(x + 2 * xs + q) * yv;
    a3 += load8(x + 3 * xs + q) * yv;
  }
  double t[4] = {};
  for (; q < n; ++q) {
    for (std::size_t i = 0; i < 4; ++i) t[i] += x[i * xs + q] * y[q];
  }
  out[0] = reduce8(a0) + t[0];
  out[os] = reduce8(a1) + t[1];
  out[2 * os] = reduce8(a2) + t[2];
  out[3 * os] = reduce8(a3) + t[3];
}

// Fixed-order dot product with eight lanes.
double dot(const double* x, const double* y, std::size_t n) {
  v8 acc{};
  std::size_t q = 0;
  for (; q + 8 <= n; q += 8) acc += load8(x + q) * load8(y + q);
  double tail = 0.0;
  for (; q < n; ++q) tail += x[q] * y[q];
  return reduce8(acc) + tail;
}

void gemm_rows(const double* a, std::size_t as, std::size_t ak, std::size_t M, std::size_t K, const double* rows,
               std::size_t ld, std::size_t n, double* out, std::size_t out_ld) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    double* o[4] = {out + i * out_ld, out + (i + 1) * out_ld, out + (i + 2) * out_ld, out + (i + 3) * out_ld};
    gemm_block<4>(a + i * as, as, ak, K, rows, ld, n, o);
  }
  for (; i < M; ++i) {
    double* o[1] = {out + i * out_ld};
    gemm_block<1>(a + i * as, as, ak, K, rows, ld, n, o);
  }
}

}  // namespace

void conv3d_forward(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const std::size_t P = g.out_volume();
  const std::size_t R = g.patch_size();
  const std::size_t M = g.out_channels;
  const std::size_t OW = g.out_dim(2);
  const std::size_t total_rows = g.out_dim(0) * g.out_dim(1);
  const Tiling tl = tiling(g);
  const PhasedInput xin = phase_split(g, x.data());
  const long count = static_cast<long>(tl.count);
#pragma omp parallel
  {
    std::vector<double> col(R * tl.tile), acc(M * tl.tile);
#pragma omp for schedule(static)
    for (long t = 0; t < count; ++t) {
      const std::size_t row0 = static_cast<std::size_t>(t) * tl.rows_per_tile;
      const std::size_t nrows = std::min(tl.rows_per_tile, total_rows - row0);
      const std::size_t n = nrows * OW;
      im2col_tile(g, xin, row0, nrows, col.data(), tl.tile);
      for (std::size_t co = 0; co < M; ++co) std::fill_n(acc.data() + co * tl.tile, n, b.empty() ? 0.0 : b[co]);
      gemm_rows(w.data(), R, 1, M, R, col.data(), tl.tile, n, acc.data(), tl.tile);
      for (std::size_t co = 0; co < M; ++co) {
        std::copy_n(acc.data() + co * tl.tile, n, y.data() + co * P + row0 * OW);
      }
    }
  }
}

void conv3d_backward(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db) {
  const std::size_t P = g.out_volume();
  const std::size_t R = g.patch_size();
  const std::size_t M = g.out_channels;
  const std::size_t OW = g.out_dim(2);
  const std::size_t total_rows = g.out_dim(0) * g.out_dim(1);
  const Tiling tl = tiling(g);

  if (!db.empty()) {
    for (std::size_t co = 0; co < M; ++co) {
      double s = 0.0;
      for (std::size_t p = 0; p < P; ++p) s += dy[co * P + p];
      db[co] += s;
    }
  }

  // Per-tile weight-gradient partials, summed afterwards in tile order.
  std::vector<double> partial(tl.count * M * R, 0.0);
  const PhasedInput xin = phase_split(g, x.data());
  const long count = static_cast<long>(tl.count);
#pragma omp parallel
  {
    std::vector<double> col(R * tl.tile);
#pragma omp for schedule(static)
    for (long t = 0; t < count; ++t) {
      const std::size_t row0 = static_cast<std::size_t>(t) * tl.rows_per_tile;
      const std::size_t nrows = std::min(tl.rows_per_tile, total_rows - row0);
      const std::size_t n = nrows * OW;
      const std::size_t p0 = row0 * OW;
      im2col_tile(g, xin, row0, nrows, col.data(), tl.tile);
      double* pw = partial.data() + static_cast<std::size_t>(t) * M * R;
      std::size_t co = 0;
      for (; co + 4 <= M; co += 4) {
        const double* d = dy.data() + co * P + p0;
        for (std::size_t r = 0; r < R; ++r) {
          dot4(d, P, col.data() + r * tl.tile, n, pw + co * R + r, R);
        }
      }
      for (; co < M; ++co) {
        const double* d = dy.data() + co * P + p0;
        for (std::size_t r = 0; r < R; ++r) pw[co * R + r] = dot(d, col.data() + r * tl.tile, n);
      }
    }
  }
  const long wsize = static_cast<long>(M * R);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < wsize; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < tl.count; ++t) s += partial[t * M * R + static_cast<std::size_t>(i)];
    dw[static_cast<std::size_t>(i)] += s;
  }
  if (dx.empty()) return;

  // dcol[r][p] = sum_co w[co][r] dy[co][p], then scatter back.
  std::vector<double> dcol(R * P, 0.0);
  const long ptiles = static_cast<long>((P + kTileTarget - 1) / kTileTarget);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < ptiles; ++t) {
    const std::size_t p0 = static_cast<std::size_t>(t) * kTileTarget;
    const std::size_t n = std::min(kTileTarget, P - p0);
    gemm_rows(w.data(), 1, R, R, M, dy.data() + p0, P, n, dcol.data() + p0, P);
  }
  col2im(g, dcol, dx);
}

}  // namespace umafd::kernels

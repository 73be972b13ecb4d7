#pragma once

// Independent reference implementations used to check the library against.
// These deliberately avoid the library's compute paths (im2col/GEMM): direct
// nested loops and central finite differences only.

#include <cmath>
#include <functional>
#include <vector>

#include "mgcd/tensor.hpp"

namespace oracle {

// Direct 6-nested-loop cross-correlation with zero padding.
template <typename T>
mgcd::TensorT<T> conv_naive(const mgcd::TensorT<T>& x, const mgcd::TensorT<T>& w,
                            const std::vector<T>& bias, int stride, int pad) {
  const int out_h = (x.h + 2 * pad - w.h) / stride + 1;
  const int out_w = (x.w + 2 * pad - w.w) / stride + 1;
  mgcd::TensorT<T> out(x.n, w.n, out_h, out_w);
  for (int nn = 0; nn < x.n; ++nn)
    for (int oc = 0; oc < w.n; ++oc)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          T acc = bias[oc];
          for (int ic = 0; ic < x.c; ++ic)
            for (int ky = 0; ky < w.h; ++ky)
              for (int kx = 0; kx < w.w; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                  acc += x.at(nn, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          out.at(nn, oc, oy, ox) = acc;
        }
  return out;
}

// Plain triple-loop matmul: out[n][k] = sum_d x[n][d] * w[k][d] + bias[k].
template <typename T>
mgcd::TensorT<T> fc_naive(const mgcd::TensorT<T>& x, const mgcd::TensorT<T>& w,
                          const std::vector<T>& bias) {
  const int d = x.c * x.h * x.w;
  mgcd::TensorT<T> out(x.n, w.n, 1, 1);
  for (int nn = 0; nn < x.n; ++nn)
    for (int k = 0; k < w.n; ++k) {
      T acc = bias[k];
      for (int j = 0; j < d; ++j) acc += x.data[nn * d + j] * w.data[k * d + j];
      out.at(nn, k, 0, 0) = acc;
    }
  return out;
}

// Central finite differences of a scalar functional with respect to every
// entry of `x`. `f` must recompute the scalar from the current contents of x.
inline mgcd::TensorT<double> finite_diff(mgcd::TensorT<double>& x,
                                         const std::function<double()>& f, double h = 1e-3) {
  mgcd::TensorT<double> g(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double fp = f();
    x.data[i] = keep - h;
    const double fm = f();
    x.data[i] = keep;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// A probed scalar together with the sign pattern of the relu inputs that
// produced it. Coordinates whose +h/-h probes show different patterns crossed
// a kink: the difference quotient is not a derivative there.
struct Probe {
  double value = 0;
  uint64_t relu_signature = 0;
};

struct MaskedGrad {
  mgcd::TensorT<double> grad;
  std::vector<uint8_t> valid;
  size_t excluded = 0;
};

inline MaskedGrad finite_diff_masked(mgcd::TensorT<double>& x,
                                     const std::function<Probe()>& f, double h = 1e-3) {
  MaskedGrad out{mgcd::TensorT<double>(x.n, x.c, x.h, x.w),
                 std::vector<uint8_t>(x.size(), 1), 0};
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const Probe fp = f();
    x.data[i] = keep - h;
    const Probe fm = f();
    x.data[i] = keep;
    out.grad.data[i] = (fp.value - fm.value) / (2.0 * h);
    if (fp.relu_signature != fm.relu_signature) {
      out.valid[i] = 0;
      ++out.excluded;
    }
  }
  return out;
}

// Worst mismatch between analytic and numeric gradients under the rule:
// relative error where |analytic| > 1e-6, absolute error (scaled so 1e-7
// maps to the same threshold) otherwise. A coordinate mask excludes probes
// that were invalidated by a relu kink.
inline double grad_mismatch(const mgcd::TensorT<double>& analytic,
                            const mgcd::TensorT<double>& numeric, double rel_tol = 1e-4,
                            double abs_tol = 1e-7, const std::vector<uint8_t>* valid = nullptr) {
  double worst = 0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    if (valid && !(*valid)[i]) continue;
    const double a = analytic.data[i], n = numeric.data[i];
    const double diff = std::abs(a - n);
    if (std::abs(a) > 1e-6) {
      worst = std::max(worst, diff / std::max(std::abs(a), std::abs(n)) / rel_tol);
    } else {
      worst = std::max(worst, diff / abs_tol);
    }
  }
  return worst;  // < 1 means within tolerance
}

inline double grad_mismatch(const mgcd::TensorT<double>& analytic, const MaskedGrad& mg,
                            double rel_tol = 1e-4, double abs_tol = 1e-7) {
  return grad_mismatch(analytic, mg.grad, rel_tol, abs_tol, &mg.valid);
}

}  // namespace oracle

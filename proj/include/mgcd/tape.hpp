#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "mgcd/errors.hpp"
#include "mgcd/tensor.hpp"

namespace mgcd {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

enum class BnMode { train, eval };

// Per-channel running statistics owned by the parameter set, updated by
// train-mode batchnorm forwards when requested.
template <typename T>
struct BnStats {
  std::vector<T> mean, var;
};

// Records primitive ops as they execute; backward() replays them in exact
// reverse order. Gradients are produced for every slot on a path from a
// grad-requiring leaf to the seeded output, and retrievable for leaves that
// asked for them.
template <typename T>
class Tape {
 public:
  int leaf(TensorT<T> v, bool requires_grad) {
    return push(std::move(v), requires_grad);
  }

  const TensorT<T>& value(int id) const { return slot(id).val; }
  bool needs_grad(int id) const { return slot(id).needs; }

  const TensorT<T>& grad_of(int id) const {
    const Slot& s = slot(id);
    if (grads_.empty() || grads_[id].empty())
      throw TapeError("no gradient recorded for slot " + std::to_string(id));
    (void)s;
    return grads_[id];
  }

  // --- primitive ops ------------------------------------------------------

  int conv2d(int x_id, int w_id, int b_id, int stride, int padding) {
    const TensorT<T>& x = value(x_id);
    const TensorT<T>& wt = value(w_id);
    const TensorT<T>& bias = value(b_id);
    if (stride < 1) throw ShapeError("conv2d: stride must be positive");
    if (padding < 0) throw ShapeError("conv2d: negative padding");
    if (x.c != wt.c)
      throw ShapeError("conv2d: input channels " + std::to_string(x.c) +
                       " != weight input channels " + std::to_string(wt.c));
    if (bias.c != wt.n || bias.n != 1 || bias.h != 1 || bias.w != 1)
      throw ShapeError("conv2d: bias must be 1x" + std::to_string(wt.n) + "x1x1, got " +
                       bias.shape_str());
    const int out_h = (x.h + 2 * padding - wt.h) / stride + 1;
    const int out_w = (x.w + 2 * padding - wt.w) / stride + 1;
    if (x.h + 2 * padding < wt.h || x.w + 2 * padding < wt.w || out_h < 1 || out_w < 1)
      throw ShapeError("conv2d: kernel " + std::to_string(wt.h) + "x" + std::to_string(wt.w) +
                       " does not fit input " + x.shape_str() + " with padding " +
                       std::to_string(padding));

    const int kk = x.c * wt.h * wt.w;      // im2col rows
    const int ss = out_h * out_w;          // spatial positions
    TensorT<T> out(x.n, wt.n, out_h, out_w);

    const bool save_cols = needs_grad(w_id);
    auto saved = std::make_shared<std::vector<T>>();
    if (save_cols) saved->resize(static_cast<size_t>(x.n) * kk * ss);

    std::vector<T> cols(static_cast<size_t>(kk) * ss);
    CMatMap<T> wmat(wt.data.data(), wt.n, kk);
    for (int nn = 0; nn < x.n; ++nn) {
      im2col(x, nn, wt.h, wt.w, stride, padding, out_h, out_w, cols.data());
      if (save_cols)
        std::copy(cols.begin(), cols.end(), saved->begin() + static_cast<size_t>(nn) * kk * ss);
      CMatMap<T> cmat(cols.data(), kk, ss);
      MatMap<T> omat(out.data.data() + out.idx(nn, 0, 0, 0), wt.n, ss);
      omat.noalias() = wmat * cmat;
      for (int oc = 0; oc < wt.n; ++oc) omat.row(oc).array() += bias.data[oc];
    }

    const int out_id = push(std::move(out), needs_grad(x_id) || needs_grad(w_id) ||
                                                needs_grad(b_id));
    nodes_.push_back([this, x_id, w_id, b_id, out_id, stride, padding, kk, ss, out_h, out_w,
                      saved]() {
      if (!slots_[out_id].needs || grads_[out_id].empty()) return;
      const TensorT<T>& x = slots_[x_id].val;
      const TensorT<T>& wt = slots_[w_id].val;
      const TensorT<T>& gout = grads_[out_id];
      if (needs_grad(b_id)) {
        TensorT<T>& gb = ensure_grad(b_id);
        for (int nn = 0; nn < x.n; ++nn)
          for (int oc = 0; oc < wt.n; ++oc) {
            T s = 0;
            const T* row = gout.data.data() + gout.idx(nn, oc, 0, 0);
            for (int i = 0; i < ss; ++i) s += row[i];
            gb.data[oc] += s;
          }
      }
      if (needs_grad(w_id)) {
        TensorT<T>& gw = ensure_grad(w_id);
        MatMap<T> gwmat(gw.data.data(), wt.n, kk);
        for (int nn = 0; nn < x.n; ++nn) {
          CMatMap<T> cmat(saved->data() + static_cast<size_t>(nn) * kk * ss, kk, ss);
          CMatMap<T> gomat(gout.data.data() + gout.idx(nn, 0, 0, 0), wt.n, ss);
          gwmat.noalias() += gomat * cmat.transpose();
        }
      }
      if (needs_grad(x_id)) {
        TensorT<T>& gx = ensure_grad(x_id);
        CMatMap<T> wmat(wt.data.data(), wt.n, kk);
        std::vector<T> gcols(static_cast<size_t>(kk) * ss);
        for (int nn = 0; nn < x.n; ++nn) {
          CMatMap<T> gomat(gout.data.data() + gout.idx(nn, 0, 0, 0), wt.n, ss);
          MatMap<T> gcmat(gcols.data(), kk, ss);
          gcmat.noalias() = wmat.transpose() * gomat;
          col2im_add(gcols.data(), nn, x.c, x.h, x.w, wt.h, wt.w, stride, padding, out_h, out_w,
                     gx);
        }
      }
    });
    return out_id;
  }

  int relu(int x_id) {
    const TensorT<T>& x = value(x_id);
    TensorT<T> out = x;
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    const int out_id = push(std::move(out), needs_grad(x_id));
    nodes_.push_back([this, x_id, out_id]() {
      if (!slots_[out_id].needs || grads_[out_id].empty()) return;
      if (!needs_grad(x_id)) return;
      const TensorT<T>& x = slots_[x_id].val;
      const TensorT<T>& gout = grads_[out_id];
      TensorT<T>& gx = ensure_grad(x_id);
      // subgradient 0 at exactly 0
      for (size_t i = 0; i < x.size(); ++i)
        if (x.data[i] > T(0)) gx.data[i] += gout.data[i];
    });
    return out_id;
  }

  int batchnorm(int x_id, int gamma_id, int beta_id, BnStats<T>* running, BnMode mode,
                bool update_running, T eps, T momentum) {
    const TensorT<T>& x = value(x_id);
    const TensorT<T>& gamma = value(gamma_id);
    const TensorT<T>& beta = value(beta_id);
    if (gamma.c != x.c || beta.c != x.c)
      throw ShapeError("batchnorm: gamma/beta channels must equal input channels " +
                       std::to_string(x.c));
    if (!running || static_cast<int>(running->mean.size()) != x.c)
      throw ShapeError("batchnorm: running stats size mismatch");
    const long m = static_cast<long>(x.n) * x.h * x.w;
    if (mode == BnMode::train && m < 2)
      throw DegenerateStatsError("batchnorm: train mode needs at least 2 values per channel, got " +
                                 std::to_string(m));

    auto mean = std::make_shared<std::vector<T>>(x.c, T(0));
    auto istd = std::make_shared<std::vector<T>>(x.c, T(0));
    if (mode == BnMode::train) {
      for (int ch = 0; ch < x.c; ++ch) {
        double s = 0;
        for (int nn = 0; nn < x.n; ++nn) {
          const T* p = x.data.data() + x.idx(nn, ch, 0, 0);
          for (long i = 0; i < static_cast<long>(x.h) * x.w; ++i) s += p[i];
        }
        const double mu = s / static_cast<double>(m);
        double v = 0;
        for (int nn = 0; nn < x.n; ++nn) {
          const T* p = x.data.data() + x.idx(nn, ch, 0, 0);
          for (long i = 0; i < static_cast<long>(x.h) * x.w; ++i) {
            const double d = p[i] - mu;
            v += d * d;
          }
        }
        v /= static_cast<double>(m);
        (*mean)[ch] = static_cast<T>(mu);
        (*istd)[ch] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
        if (update_running) {
          running->mean[ch] = (T(1) - momentum) * running->mean[ch] + momentum * static_cast<T>(mu);
          running->var[ch] = (T(1) - momentum) * running->var[ch] + momentum * static_cast<T>(v);
        }
      }
    } else {
      for (int ch = 0; ch < x.c; ++ch) {
        (*mean)[ch] = running->mean[ch];
        (*istd)[ch] =
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(running->var[ch]) +
                                           static_cast<double>(eps)));
      }
    }

    TensorT<T> out(x.n, x.c, x.h, x.w);
    for (int nn = 0; nn < x.n; ++nn)
      for (int ch = 0; ch < x.c; ++ch) {
        const T* p = x.data.data() + x.idx(nn, ch, 0, 0);
        T* q = out.data.data() + out.idx(nn, ch, 0, 0);
        const T mu = (*mean)[ch], is = (*istd)[ch], g = gamma.data[ch], b = beta.data[ch];
        for (long i = 0; i < static_cast<long>(x.h) * x.w; ++i) q[i] = g * (p[i] - mu) * is + b;
      }

    const int out_id = push(std::move(out), needs_grad(x_id) || needs_grad(gamma_id) ||
                                                needs_grad(beta_id));
    nodes_.push_back([this, x_id, gamma_id, beta_id, out_id, mode, mean, istd, m]() {
      if (!slots_[out_id].needs || grads_[out_id].empty()) return;
      const TensorT<T>& x = slots_[x_id].val;
      const TensorT<T>& gamma = slots_[gamma_id].val;
      const TensorT<T>& gout = grads_[out_id];
      const long hw = static_cast<long>(x.h) * x.w;
      const bool want_x = needs_grad(x_id);
      const bool want_g = needs_grad(gamma_id);
      const bool want_b = needs_grad(beta_id);
      for (int ch = 0; ch < x.c; ++ch) {
        const T mu = (*mean)[ch], is = (*istd)[ch], g = gamma.data[ch];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int nn = 0; nn < x.n; ++nn) {
          const T* px = x.data.data() + x.idx(nn, ch, 0, 0);
          const T* pg = gout.data.data() + gout.idx(nn, ch, 0, 0);
          for (long i = 0; i < hw; ++i) {
            sum_dy += pg[i];
            sum_dy_xhat += pg[i] * ((px[i] - mu) * is);
          }
        }
        if (want_b) ensure_grad(beta_id).data[ch] += static_cast<T>(sum_dy);
        if (want_g) ensure_grad(gamma_id).data[ch] += static_cast<T>(sum_dy_xhat);
        if (want_x) {
          TensorT<T>& gx = ensure_grad(x_id);
          if (mode == BnMode::train) {
            // full gradient, including the dependence of batch mean/var on x
            const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(m));
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(m));
            for (int nn = 0; nn < x.n; ++nn) {
              const T* px = x.data.data() + x.idx(nn, ch, 0, 0);
              const T* pg = gout.data.data() + gout.idx(nn, ch, 0, 0);
              T* pgx = gx.data.data() + gx.idx(nn, ch, 0, 0);
              for (long i = 0; i < hw; ++i) {
                const T xhat = (px[i] - mu) * is;
                pgx[i] += g * is * (pg[i] - mean_dy - xhat * mean_dy_xhat);
              }
            }
          } else {
            for (int nn = 0; nn < x.n; ++nn) {
              const T* pg = gout.data.data() + gout.idx(nn, ch, 0, 0);
              T* pgx = gx.data.data() + gx.idx(nn, ch, 0, 0);
              for (long i = 0; i < hw; ++i) pgx[i] += g * is * pg[i];
            }
          }
        }
      }
    });
    return out_id;
  }

  int fully_connected(int x_id, int w_id, int b_id) {
    const TensorT<T>& x = value(x_id);
    const TensorT<T>& wt = value(w_id);  // (K, D, 1, 1), row per output feature
    const TensorT<T>& bias = value(b_id);
    const int d = x.c * x.h * x.w;
    if (wt.c != d || wt.h != 1 || wt.w != 1)
      throw ShapeError("fully_connected: weight expects input dim " + std::to_string(wt.c) +
                       ", input flattens to " + std::to_string(d));
    const int k = wt.n;
    if (bias.c != k || bias.n != 1 || bias.h != 1 || bias.w != 1)
      throw ShapeError("fully_connected: bias must be 1x" + std::to_string(k) + "x1x1");

    TensorT<T> out(x.n, k, 1, 1);
    CMatMap<T> xm(x.data.data(), x.n, d);
    CMatMap<T> wm(wt.data.data(), k, d);
    MatMap<T> om(out.data.data(), x.n, k);
    om.noalias() = xm * wm.transpose();
    for (int nn = 0; nn < x.n; ++nn) om.row(nn) += CMatMap<T>(bias.data.data(), 1, k);

    const int out_id = push(std::move(out), needs_grad(x_id) || needs_grad(w_id) ||
                                                needs_grad(b_id));
    nodes_.push_back([this, x_id, w_id, b_id, out_id, d, k]() {
      if (!slots_[out_id].needs || grads_[out_id].empty()) return;
      const TensorT<T>& x = slots_[x_id].val;
      const TensorT<T>& wt = slots_[w_id].val;
      const TensorT<T>& gout = grads_[out_id];
      CMatMap<T> gom(gout.data.data(), x.n, k);
      if (needs_grad(b_id)) {
        TensorT<T>& gb = ensure_grad(b_id);
        MatMap<T> gbm(gb.data.data(), 1, k);
        gbm.noalias() += gom.colwise().sum();
      }
      if (needs_grad(w_id)) {
        TensorT<T>& gw = ensure_grad(w_id);
        CMatMap<T> xm(x.data.data(), x.n, d);
        MatMap<T> gwm(gw.data.data(), k, d);
        gwm.noalias() += gom.transpose() * xm;
      }
      if (needs_grad(x_id)) {
        TensorT<T>& gx = ensure_grad(x_id);
        CMatMap<T> wm(wt.data.data(), k, d);
        MatMap<T> gxm(gx.data.data(), x.n, d);
        gxm.noalias() += gom * wm;
      }
    });
    return out_id;
  }

  int reduce_sum(int x_id) {
    const TensorT<T>& x = value(x_id);
    T s = 0;
    for (const T& v : x.data) s += v;
    TensorT<T> out(1, 1, 1, 1);
    out.data[0] = s;
    const int out_id = push(std::move(out), needs_grad(x_id));
    nodes_.push_back([this, x_id, out_id]() {
      if (!slots_[out_id].needs || grads_[out_id].empty()) return;
      if (!needs_grad(x_id)) return;
      TensorT<T>& gx = ensure_grad(x_id);
      const T g = grads_[out_id].data[0];
      for (T& v : gx.data) v += g;
    });
    return out_id;
  }

  // --- backward -----------------------------------------------------------

  // Seeds the output slot with an explicit upstream gradient and replays the
  // tape in reverse.
  void backward(int out_id, TensorT<T> seed) {
    const Slot& s = slot(out_id);
    check_same_shape(s.val, seed, "backward seed");
    grads_.assign(slots_.size(), TensorT<T>());
    grads_[out_id] = std::move(seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    // slots that require a gradient but were never reached have gradient zero
    for (size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].needs && grads_[i].empty()) ensure_grad(static_cast<int>(i));
  }

  // Scalar convenience: upstream gradient 1 on a one-element output.
  void backward(int out_id) {
    const TensorT<T>& v = slot(out_id).val;
    if (v.size() != 1)
      throw TapeError("backward: output is not scalar, shape " + v.shape_str());
    TensorT<T> seed(v.n, v.c, v.h, v.w);
    seed.data[0] = T(1);
    backward(out_id, std::move(seed));
  }

  size_t num_ops() const { return nodes_.size(); }

 private:
  struct Slot {
    TensorT<T> val;
    bool needs = false;
  };

  const Slot& slot(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= slots_.size())
      throw TapeError("slot id " + std::to_string(id) + " not on tape");
    return slots_[id];
  }

  int push(TensorT<T> v, bool needs) {
    slots_.push_back(Slot{std::move(v), needs});
    return static_cast<int>(slots_.size()) - 1;
  }

  TensorT<T>& ensure_grad(int id) {
    if (grads_[id].empty()) {
      const TensorT<T>& v = slots_[id].val;
      grads_[id] = TensorT<T>(v.n, v.c, v.h, v.w);
    }
    return grads_[id];
  }

  static void im2col(const TensorT<T>& x, int nn, int kh, int kw, int stride, int pad, int out_h,
                     int out_w, T* cols) {
    const int ss = out_h * out_w;
    for (int ch = 0; ch < x.c; ++ch)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          T* row = cols + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) * ss;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - pad + ky;
            T* dst = row + static_cast<size_t>(oy) * out_w;
            if (iy < 0 || iy >= x.h) {
              std::fill(dst, dst + out_w, T(0));
              continue;
            }
            const T* src = x.data.data() + x.idx(nn, ch, iy, 0);
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < x.w) ? src[ix] : T(0);
            }
          }
        }
  }

  static void col2im_add(const T* cols, int nn, int c, int h, int w, int kh, int kw, int stride,
                         int pad, int out_h, int out_w, TensorT<T>& gx) {
    const int ss = out_h * out_w;
    for (int ch = 0; ch < c; ++ch)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const T* row = cols + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) * ss;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            T* dst = gx.data.data() + gx.idx(nn, ch, iy, 0);
            const T* src = row + static_cast<size_t>(oy) * out_w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
          }
        }
  }

  std::vector<Slot> slots_;
  std::vector<TensorT<T>> grads_;
  std::vector<std::function<void()>> nodes_;
};

}  // namespace mgcd

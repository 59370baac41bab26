#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/rng.hpp"
#include "patchlab/tensor.hpp"

namespace patchlab::nn {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* value;
};

// 2-D convolution, no bias (every conv here feeds a batch norm).
// im2col + GEMM; the column buffer is rebuilt in backward instead of cached.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        w_(Tensor<T>({out_ch, in_ch, k, k})), gw_(Tensor<T>({out_ch, in_ch, k, k})) {}

  void init(Rng& rng) {
    // He normal, fan_out
    double std = std::sqrt(2.0 / (static_cast<double>(out_ch_) * k_ * k_));
    for (auto& v : w_.data) v = static_cast<T>(rng.gaussian(0.0, std));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, k_, stride_, pad_);
    const int ow = conv_out_dim(w, k_, stride_, pad_);
    const int K = in_ch_ * k_ * k_, P = oh * ow;
    Tensor<T> y({n, out_ch_, oh, ow});
    cols_.resize(static_cast<std::size_t>(K) * P);
    ConstMatMap<T> W(w_.ptr(), out_ch_, K);
    for (int i = 0; i < n; ++i) {
      im2col(x.ptr() + static_cast<std::size_t>(i) * in_ch_ * h * w, h, w, oh, ow);
      ConstMatMap<T> C(cols_.data(), K, P);
      MatMap<T> Y(y.ptr() + static_cast<std::size_t>(i) * out_ch_ * P, out_ch_, P);
      Y.noalias() = W * C;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int oh = gy.dim(2), ow = gy.dim(3);
    const int K = in_ch_ * k_ * k_, P = oh * ow;
    Tensor<T> gx(x_.shape);
    cols_.resize(static_cast<std::size_t>(K) * P);
    gcols_.resize(static_cast<std::size_t>(K) * P);
    ConstMatMap<T> W(w_.ptr(), out_ch_, K);
    MatMap<T> GW(gw_.ptr(), out_ch_, K);
    for (int i = 0; i < n; ++i) {
      ConstMatMap<T> GY(gy.ptr() + static_cast<std::size_t>(i) * out_ch_ * P, out_ch_, P);
      im2col(x_.ptr() + static_cast<std::size_t>(i) * in_ch_ * h * w, h, w, oh, ow);
      ConstMatMap<T> C(cols_.data(), K, P);
      GW.noalias() += GY * C.transpose();
      MatMap<T> GC(gcols_.data(), K, P);
      GC.noalias() = W.transpose() * GY;
      col2im(gx.ptr() + static_cast<std::size_t>(i) * in_ch_ * h * w, h, w, oh, ow);
    }
    return gx;
  }

  void collect(const std::string& prefix, std::vector<Param<T>>& params,
               std::vector<Buffer<T>>&) {
    params.push_back({prefix + ".weight", &w_, &gw_});
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& weight_grad() { return gw_; }

 private:
  void im2col(const T* x, int h, int w, int oh, int ow) {
    const int P = oh * ow;
    std::size_t kk = 0;
    for (int c = 0; c < in_ch_; ++c) {
      const T* xc = x + static_cast<std::size_t>(c) * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++kk) {
          T* dst = cols_.data() + kk * P;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
              continue;
            }
            const T* row = xc + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              dst[oy * ow + ox] = (ix >= 0 && ix < w) ? row[ix] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(T* gx, int h, int w, int oh, int ow) {
    const int P = oh * ow;
    std::size_t kk = 0;
    for (int c = 0; c < in_ch_; ++c) {
      T* xc = gx + static_cast<std::size_t>(c) * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++kk) {
          const T* src = gcols_.data() + kk * P;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            T* row = xc + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) row[ix] += src[oy * ow + ox];
            }
          }
        }
      }
    }
  }

  int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  Tensor<T> w_, gw_, x_;
  std::vector<T> cols_, gcols_;
};

// Batch normalization over (N, H, W) per channel. Training mode normalizes
// with batch statistics and updates the running estimates; eval mode uses the
// running estimates only.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int ch)
      : ch_(ch), gamma_(Tensor<T>({ch})), beta_(Tensor<T>({ch})),
        ggamma_(Tensor<T>({ch})), gbeta_(Tensor<T>({ch})),
        running_mean_(Tensor<T>({ch})), running_var_(Tensor<T>({ch})) {
    for (auto& v : gamma_.data) v = T(1);
    for (auto& v : running_var_.data) v = T(1);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;
    Tensor<T> y(x.shape);
    if (train) {
      xhat_ = Tensor<T>(x.shape);
      invstd_.assign(ch_, T(0));
      m_ = m;
      for (int c = 0; c < ch_; ++c) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = x.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) mean += p[j];
        }
        mean /= static_cast<double>(m);
        for (int i = 0; i < n; ++i) {
          const T* p = x.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            double d = p[j] - mean;
            var += d * d;
          }
        }
        var /= static_cast<double>(m);
        double invstd = 1.0 / std::sqrt(var + eps_);
        invstd_[c] = static_cast<T>(invstd);
        double g = gamma_.data[c], b = beta_.data[c];
        for (int i = 0; i < n; ++i) {
          const T* p = x.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          T* xh = xhat_.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          T* yp = y.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            double v = (p[j] - mean) * invstd;
            xh[j] = static_cast<T>(v);
            yp[j] = static_cast<T>(g * v + b);
          }
        }
        // unbiased variance feeds the running estimate
        double unbiased = (m > 1) ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
        running_mean_.data[c] = static_cast<T>((1.0 - momentum_) * running_mean_.data[c] + momentum_ * mean);
        running_var_.data[c] = static_cast<T>((1.0 - momentum_) * running_var_.data[c] + momentum_ * unbiased);
      }
    } else {
      for (int c = 0; c < ch_; ++c) {
        double invstd = 1.0 / std::sqrt(static_cast<double>(running_var_.data[c]) + eps_);
        double g = gamma_.data[c], b = beta_.data[c], mu = running_mean_.data[c];
        for (int i = 0; i < n; ++i) {
          const T* p = x.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          T* yp = y.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j)
            yp[j] = static_cast<T>(g * ((p[j] - mu) * invstd) + b);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> gx(gy.shape);
    for (int c = 0; c < ch_; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* g = gy.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
        const T* xh = xhat_.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          sum_gy += g[j];
          sum_gy_xhat += static_cast<double>(g[j]) * xh[j];
        }
      }
      ggamma_.data[c] += static_cast<T>(sum_gy_xhat);
      gbeta_.data[c] += static_cast<T>(sum_gy);
      double inv_m = 1.0 / static_cast<double>(m_);
      double scale = static_cast<double>(gamma_.data[c]) * invstd_[c];
      for (int i = 0; i < n; ++i) {
        const T* g = gy.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
        const T* xh = xhat_.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
        T* o = gx.ptr() + (static_cast<std::size_t>(i) * ch_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j)
          o[j] = static_cast<T>(scale * (g[j] - inv_m * sum_gy - xh[j] * inv_m * sum_gy_xhat));
      }
    }
    return gx;
  }

  void collect(const std::string& prefix, std::vector<Param<T>>& params,
               std::vector<Buffer<T>>& buffers) {
    params.push_back({prefix + ".weight", &gamma_, &ggamma_});
    params.push_back({prefix + ".bias", &beta_, &gbeta_});
    buffers.push_back({prefix + ".running_mean", &running_mean_});
    buffers.push_back({prefix + ".running_var", &running_var_});
  }

  // Short runs need a larger momentum or the running estimates lag the
  // batch statistics badly; 0.1 matches the usual long-run default.
  void set_momentum(double m) { momentum_ = m; }

 private:
  int ch_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  Tensor<T> gamma_, beta_, ggamma_, gbeta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> invstd_;
  std::size_t m_ = 0;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.numel(); ++i)
      gx.data[i] = x_.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(int k, int stride, int pad) : k_(k), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, k_, stride_, pad_);
    const int ow = conv_out_dim(w, k_, stride_, pad_);
    in_shape_ = x.shape;
    Tensor<T> y({n, c, oh, ow});
    argmax_.assign(y.numel(), 0);
    std::size_t o = 0;
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* xp = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            int best_idx = -1;
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= w) continue;
                T v = xp[iy * w + ix];
                if (v > best) {
                  best = v;
                  best_idx = iy * w + ix;
                }
              }
            }
            y.data[o] = best;
            argmax_[o] = (static_cast<std::size_t>(i) * c + ch) * h * w + best_idx;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    for (std::size_t o = 0; o < gy.numel(); ++o) gx.data[argmax_[o]] += gy.data[o];
    return gx;
  }

 private:
  int k_ = 2, stride_ = 2, pad_ = 0;
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

// Adaptive average pool to 1x1, i.e. a global spatial mean per channel.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor<T> y({n, c});
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* p = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * plane;
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
        y.data[static_cast<std::size_t>(i) * c + ch] = static_cast<T>(s / static_cast<double>(plane));
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    const int n = in_shape_[0], c = in_shape_[1];
    const std::size_t plane = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        T g = gy.data[static_cast<std::size_t>(i) * c + ch] / static_cast<T>(plane);
        T* p = gx.ptr() + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = g;
      }
    }
    return gx;
  }

 private:
  std::vector<int> in_shape_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out)
      : in_(in), out_(out), w_(Tensor<T>({out, in})), b_(Tensor<T>({out})),
        gw_(Tensor<T>({out, in})), gb_(Tensor<T>({out})) {}

  void init(Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : w_.data) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : b_.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int n = x.dim(0);
    Tensor<T> y({n, out_});
    ConstMatMap<T> X(x.ptr(), n, in_);
    ConstMatMap<T> W(w_.ptr(), out_, in_);
    MatMap<T> Y(y.ptr(), n, out_);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) y.data[static_cast<std::size_t>(i) * out_ + o] += b_.data[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = x_.dim(0);
    Tensor<T> gx(x_.shape);
    ConstMatMap<T> GY(gy.ptr(), n, out_);
    ConstMatMap<T> X(x_.ptr(), n, in_);
    ConstMatMap<T> W(w_.ptr(), out_, in_);
    MatMap<T> GW(gw_.ptr(), out_, in_);
    MatMap<T> GX(gx.ptr(), n, in_);
    GW.noalias() += GY.transpose() * X;
    GX.noalias() = GY * W;
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) gb_.data[o] += gy.data[static_cast<std::size_t>(i) * out_ + o];
    return gx;
  }

  void collect(const std::string& prefix, std::vector<Param<T>>& params,
               std::vector<Buffer<T>>&) {
    params.push_back({prefix + ".weight", &w_, &gw_});
    params.push_back({prefix + ".bias", &b_, &gb_});
  }

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> w_, b_, gw_, gb_, x_;
};

// conv3x3-bn-relu-conv3x3-bn plus the identity (or 1x1 projected) skip.
template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(int in_planes, int planes, int stride)
      : conv1_(in_planes, planes, 3, stride, 1), bn1_(planes),
        conv2_(planes, planes, 3, 1, 1), bn2_(planes),
        has_downsample_(stride != 1 || in_planes != planes) {
    if (has_downsample_) {
      down_conv_ = Conv2d<T>(in_planes, planes, 1, stride, 0);
      down_bn_ = BatchNorm2d<T>(planes);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (has_downsample_) down_conv_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x), train));
    out = bn2_.forward(conv2_.forward(out), train);
    Tensor<T> identity =
        has_downsample_ ? down_bn_.forward(down_conv_.forward(x), train) : x;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += identity.data[i];
    return relu2_.forward(out);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gsum = relu2_.backward(gy);
    Tensor<T> gmain = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(gsum)))));
    Tensor<T> gid = has_downsample_
                        ? down_conv_.backward(down_bn_.backward(gsum))
                        : gsum;
    for (std::size_t i = 0; i < gmain.numel(); ++i) gmain.data[i] += gid.data[i];
    return gmain;
  }

  void collect(const std::string& prefix, std::vector<Param<T>>& params,
               std::vector<Buffer<T>>& buffers) {
    conv1_.collect(prefix + ".conv1", params, buffers);
    bn1_.collect(prefix + ".bn1", params, buffers);
    conv2_.collect(prefix + ".conv2", params, buffers);
    bn2_.collect(prefix + ".bn2", params, buffers);
    if (has_downsample_) {
      down_conv_.collect(prefix + ".downsample.0", params, buffers);
      down_bn_.collect(prefix + ".downsample.1", params, buffers);
    }
  }

  void set_bn_momentum(double m) {
    bn1_.set_momentum(m);
    bn2_.set_momentum(m);
    if (has_downsample_) down_bn_.set_momentum(m);
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  ReLU<T> relu1_, relu2_;
  bool has_downsample_ = false;
  Conv2d<T> down_conv_;
  BatchNorm2d<T> down_bn_;
};

// The 18-layer residual classifier: 7x7 stem, four stages of two basic
// blocks, global average pool and a single-logit head. Accepts any spatial
// size large enough to survive the five stride-2 reductions; 150x130 inputs
// work unchanged.
template <typename T>
class ResNet18 {
 public:
  ResNet18()
      : conv1_(3, 64, 7, 2, 3), bn1_(64), maxpool_(3, 2, 1), fc_(512, 1) {
    const int planes[4] = {64, 128, 256, 512};
    int in_planes = 64;
    for (int s = 0; s < 4; ++s) {
      int stride = (s == 0) ? 1 : 2;
      blocks_[s][0] = BasicBlock<T>(in_planes, planes[s], stride);
      blocks_[s][1] = BasicBlock<T>(planes[s], planes[s], 1);
      in_planes = planes[s];
    }
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    conv1_.init(rng);
    for (auto& stage : blocks_)
      for (auto& b : stage) b.init(rng);
    fc_.init(rng);
  }

  // x: [N, 3, H, W] -> logits [N, 1]
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> t = relu_.forward(bn1_.forward(conv1_.forward(x), train));
    t = maxpool_.forward(t);
    for (auto& stage : blocks_)
      for (auto& b : stage) t = b.forward(t, train);
    t = gap_.forward(t);
    return fc_.forward(t);
  }

  Tensor<T> backward(const Tensor<T>& glogits) {
    Tensor<T> g = gap_.backward(fc_.backward(glogits));
    for (int s = 3; s >= 0; --s)
      for (int b = 1; b >= 0; --b) g = blocks_[s][b].backward(g);
    g = maxpool_.backward(g);
    return conv1_.backward(bn1_.backward(relu_.backward(g)));
  }

  std::vector<Param<T>> parameters() {
    std::vector<Param<T>> params;
    std::vector<Buffer<T>> buffers;
    collect(params, buffers);
    return params;
  }
  std::vector<Buffer<T>> buffers() {
    std::vector<Param<T>> params;
    std::vector<Buffer<T>> buffers;
    collect(params, buffers);
    return buffers;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->zero();
  }

  void set_bn_momentum(double m) {
    bn1_.set_momentum(m);
    for (auto& stage : blocks_)
      for (auto& b : stage) b.set_bn_momentum(m);
  }

 private:
  void collect(std::vector<Param<T>>& params, std::vector<Buffer<T>>& buffers) {
    conv1_.collect("conv1", params, buffers);
    bn1_.collect("bn1", params, buffers);
    for (int s = 0; s < 4; ++s)
      for (int b = 0; b < 2; ++b)
        blocks_[s][b].collect("layer" + std::to_string(s + 1) + "." + std::to_string(b),
                              params, buffers);
    fc_.collect("fc", params, buffers);
  }

  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  ReLU<T> relu_;
  MaxPool2d<T> maxpool_;
  BasicBlock<T> blocks_[4][2];
  GlobalAvgPool<T> gap_;
  Linear<T> fc_;
};

}  // namespace patchlab::nn

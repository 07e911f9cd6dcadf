// ============================================================================
// nn.hpp - minimal NN layers with hand-rolled backprop and AdamW
//
// Activations are NCHW float batches. Each layer caches what its backward
// pass needs; forward/backward are called strictly in sequence by the owning
// model. Gradients of every layer are finite-difference checked in the test
// suite.
// ============================================================================

#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "con2/rng.hpp"
#include "con2/util.hpp"

namespace con2 {

struct Batch {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Batch() = default;
    Batch(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f) {}

    float& at(int i, int ch, int y, int x) {
        return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    float at(int i, int ch, int y, int x) const {
        return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    std::size_t per_sample() const { return static_cast<std::size_t>(c) * h * w; }
};

struct Param {
    std::vector<float> w, g;  // weights and accumulated gradient
    std::vector<float> m, v;  // AdamW moments

    explicit Param(std::size_t size = 0) { resize(size); }
    void resize(std::size_t size) {
        w.assign(size, 0.0f);
        g.assign(size, 0.0f);
        m.assign(size, 0.0f);
        v.assign(size, 0.0f);
    }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }
};

// Decoupled weight decay Adam. beta/eps follow the usual defaults; weight
// decay is applied to every parameter.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.001;
    long t = 0;

    void step(const std::vector<Param*>& params, double lr) {
        t++;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (Param* p : params) {
            for (std::size_t i = 0; i < p->w.size(); ++i) {
                double g = p->g[i];
                p->m[i] = static_cast<float>(beta1 * p->m[i] + (1.0 - beta1) * g);
                p->v[i] = static_cast<float>(beta2 * p->v[i] + (1.0 - beta2) * g * g);
                double mhat = p->m[i] / bc1;
                double vhat = p->v[i] / bc2;
                p->w[i] -= static_cast<float>(
                    lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p->w[i]));
            }
        }
    }
};

// ----------------------------------------------------------------------------

class Conv2d {
  public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(pad),
          weight_(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel), bias_(out_ch) {}

    void init(Rng& rng) {
        double scale = std::sqrt(2.0 / (static_cast<double>(in_ch_) * k_ * k_));
        for (auto& w : weight_.w) w = static_cast<float>(rng.normal(0.0, scale));
        std::fill(bias_.w.begin(), bias_.w.end(), 0.0f);
    }

    int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Batch forward(const Batch& x) {
        x_ = x;
        int oh = out_dim(x.h), ow = out_dim(x.w);
        Batch y(x.n, out_ch_, oh, ow);
        for (int i = 0; i < x.n; ++i)
            for (int co = 0; co < out_ch_; ++co) {
                const float* wbase = &weight_.w[static_cast<std::size_t>(co) * in_ch_ * k_ * k_];
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        double acc = bias_.w[co];
                        for (int ci = 0; ci < in_ch_; ++ci)
                            for (int ky = 0; ky < k_; ++ky) {
                                int iy = oy * stride_ - pad_ + ky;
                                if (iy < 0 || iy >= x.h) continue;
                                const float* wrow = wbase + (ci * k_ + ky) * k_;
                                for (int kx = 0; kx < k_; ++kx) {
                                    int ix = ox * stride_ - pad_ + kx;
                                    if (ix < 0 || ix >= x.w) continue;
                                    acc += wrow[kx] * x.at(i, ci, iy, ix);
                                }
                            }
                        y.at(i, co, oy, ox) = static_cast<float>(acc);
                    }
            }
        return y;
    }

    Batch backward(const Batch& grad_y) {
        Batch grad_x(x_.n, x_.c, x_.h, x_.w);
        int oh = grad_y.h, ow = grad_y.w;
        for (int i = 0; i < x_.n; ++i)
            for (int co = 0; co < out_ch_; ++co) {
                float* gwbase = &weight_.g[static_cast<std::size_t>(co) * in_ch_ * k_ * k_];
                const float* wbase = &weight_.w[static_cast<std::size_t>(co) * in_ch_ * k_ * k_];
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        float g = grad_y.at(i, co, oy, ox);
                        if (g == 0.0f) continue;
                        bias_.g[co] += g;
                        for (int ci = 0; ci < in_ch_; ++ci)
                            for (int ky = 0; ky < k_; ++ky) {
                                int iy = oy * stride_ - pad_ + ky;
                                if (iy < 0 || iy >= x_.h) continue;
                                float* gwrow = gwbase + (ci * k_ + ky) * k_;
                                const float* wrow = wbase + (ci * k_ + ky) * k_;
                                for (int kx = 0; kx < k_; ++kx) {
                                    int ix = ox * stride_ - pad_ + kx;
                                    if (ix < 0 || ix >= x_.w) continue;
                                    gwrow[kx] += g * x_.at(i, ci, iy, ix);
                                    grad_x.at(i, ci, iy, ix) += g * wrow[kx];
                                }
                            }
                    }
            }
        return grad_x;
    }

    std::vector<Param*> params() { return {&weight_, &bias_}; }
    std::vector<std::vector<float>*> buffers() { return {}; }

  private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Param weight_, bias_;
    Batch x_;
};

class BatchNorm2d {
  public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
        : ch_(channels), momentum_(momentum), eps_(eps), gamma_(channels), beta_(channels),
          running_mean_(channels, 0.0f), running_var_(channels, 1.0f) {
        std::fill(gamma_.w.begin(), gamma_.w.end(), 1.0f);
    }

    Batch forward(const Batch& x, bool train) {
        int m = x.n * x.h * x.w;
        Batch y(x.n, x.c, x.h, x.w);
        mean_.assign(ch_, 0.0);
        inv_std_.assign(ch_, 0.0);
        if (train) {
            for (int ch = 0; ch < ch_; ++ch) {
                double mu = 0.0;
                for (int i = 0; i < x.n; ++i)
                    for (int y0 = 0; y0 < x.h; ++y0)
                        for (int x0 = 0; x0 < x.w; ++x0) mu += x.at(i, ch, y0, x0);
                mu /= m;
                double var = 0.0;
                for (int i = 0; i < x.n; ++i)
                    for (int y0 = 0; y0 < x.h; ++y0)
                        for (int x0 = 0; x0 < x.w; ++x0) {
                            double d = x.at(i, ch, y0, x0) - mu;
                            var += d * d;
                        }
                var /= m;
                mean_[ch] = mu;
                inv_std_[ch] = 1.0 / std::sqrt(var + eps_);
                running_mean_[ch] =
                    static_cast<float>((1.0 - momentum_) * running_mean_[ch] + momentum_ * mu);
                running_var_[ch] =
                    static_cast<float>((1.0 - momentum_) * running_var_[ch] + momentum_ * var);
            }
        } else {
            for (int ch = 0; ch < ch_; ++ch) {
                mean_[ch] = running_mean_[ch];
                inv_std_[ch] = 1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + eps_);
            }
        }
        xhat_ = Batch(x.n, x.c, x.h, x.w);
        for (int i = 0; i < x.n; ++i)
            for (int ch = 0; ch < ch_; ++ch)
                for (int y0 = 0; y0 < x.h; ++y0)
                    for (int x0 = 0; x0 < x.w; ++x0) {
                        double xh = (x.at(i, ch, y0, x0) - mean_[ch]) * inv_std_[ch];
                        xhat_.at(i, ch, y0, x0) = static_cast<float>(xh);
                        y.at(i, ch, y0, x0) =
                            static_cast<float>(gamma_.w[ch] * xh + beta_.w[ch]);
                    }
        train_mode_ = train;
        return y;
    }

    Batch backward(const Batch& grad_y) {
        int m = grad_y.n * grad_y.h * grad_y.w;
        Batch grad_x(grad_y.n, grad_y.c, grad_y.h, grad_y.w);
        for (int ch = 0; ch < ch_; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int i = 0; i < grad_y.n; ++i)
                for (int y0 = 0; y0 < grad_y.h; ++y0)
                    for (int x0 = 0; x0 < grad_y.w; ++x0) {
                        double g = grad_y.at(i, ch, y0, x0);
                        sum_g += g;
                        sum_gx += g * xhat_.at(i, ch, y0, x0);
                    }
            gamma_.g[ch] += static_cast<float>(sum_gx);
            beta_.g[ch] += static_cast<float>(sum_g);
            double gamma = gamma_.w[ch];
            if (train_mode_) {
                for (int i = 0; i < grad_y.n; ++i)
                    for (int y0 = 0; y0 < grad_y.h; ++y0)
                        for (int x0 = 0; x0 < grad_y.w; ++x0) {
                            double g = grad_y.at(i, ch, y0, x0);
                            double xh = xhat_.at(i, ch, y0, x0);
                            grad_x.at(i, ch, y0, x0) = static_cast<float>(
                                gamma * inv_std_[ch] *
                                (g - sum_g / m - xh * sum_gx / m));
                        }
            } else {
                for (int i = 0; i < grad_y.n; ++i)
                    for (int y0 = 0; y0 < grad_y.h; ++y0)
                        for (int x0 = 0; x0 < grad_y.w; ++x0)
                            grad_x.at(i, ch, y0, x0) = static_cast<float>(
                                gamma * inv_std_[ch] * grad_y.at(i, ch, y0, x0));
            }
        }
        return grad_x;
    }

    std::vector<Param*> params() { return {&gamma_, &beta_}; }
    std::vector<std::vector<float>*> buffers() { return {&running_mean_, &running_var_}; }

  private:
    int ch_;
    double momentum_, eps_;
    Param gamma_, beta_;
    std::vector<float> running_mean_, running_var_;
    std::vector<double> mean_, inv_std_;
    Batch xhat_;
    bool train_mode_ = true;
};

class ReLU {
  public:
    Batch forward(const Batch& x) {
        mask_.assign(x.v.size(), false);
        Batch y = x;
        for (std::size_t i = 0; i < y.v.size(); ++i) {
            if (y.v[i] > 0.0f) {
                mask_[i] = true;
            } else {
                y.v[i] = 0.0f;
            }
        }
        return y;
    }
    Batch backward(const Batch& grad_y) {
        Batch grad_x = grad_y;
        for (std::size_t i = 0; i < grad_x.v.size(); ++i)
            if (!mask_[i]) grad_x.v[i] = 0.0f;
        return grad_x;
    }

  private:
    std::vector<bool> mask_;
};

class MaxPool2d {
  public:
    MaxPool2d(int kernel, int stride, int pad = 0) : k_(kernel), stride_(stride), pad_(pad) {}

    int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Batch forward(const Batch& x) {
        in_n_ = x.n;
        in_c_ = x.c;
        in_h_ = x.h;
        in_w_ = x.w;
        int oh = out_dim(x.h), ow = out_dim(x.w);
        Batch y(x.n, x.c, oh, ow);
        argmax_.assign(y.v.size(), 0);
        std::size_t o = 0;
        for (int i = 0; i < x.n; ++i)
            for (int ch = 0; ch < x.c; ++ch)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox, ++o) {
                        float best = -std::numeric_limits<float>::infinity();
                        std::size_t best_idx = 0;
                        for (int ky = 0; ky < k_; ++ky) {
                            int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                float v = x.at(i, ch, iy, ix);
                                if (v > best) {
                                    best = v;
                                    best_idx = ((static_cast<std::size_t>(i) * x.c + ch) * x.h +
                                                iy) * x.w + ix;
                                }
                            }
                        }
                        y.v[o] = best;
                        argmax_[o] = best_idx;
                    }
        return y;
    }

    Batch backward(const Batch& grad_y) {
        Batch grad_x(in_n_, in_c_, in_h_, in_w_);
        for (std::size_t o = 0; o < grad_y.v.size(); ++o) grad_x.v[argmax_[o]] += grad_y.v[o];
        return grad_x;
    }

  private:
    int k_, stride_, pad_;
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
    std::vector<std::size_t> argmax_;
};

class GlobalAvgPool {
  public:
    Batch forward(const Batch& x) {
        in_h_ = x.h;
        in_w_ = x.w;
        Batch y(x.n, x.c, 1, 1);
        double scale = 1.0 / (static_cast<double>(x.h) * x.w);
        for (int i = 0; i < x.n; ++i)
            for (int ch = 0; ch < x.c; ++ch) {
                double s = 0.0;
                for (int y0 = 0; y0 < x.h; ++y0)
                    for (int x0 = 0; x0 < x.w; ++x0) s += x.at(i, ch, y0, x0);
                y.at(i, ch, 0, 0) = static_cast<float>(s * scale);
            }
        return y;
    }
    Batch backward(const Batch& grad_y) {
        Batch grad_x(grad_y.n, grad_y.c, in_h_, in_w_);
        float scale = 1.0f / (static_cast<float>(in_h_) * in_w_);
        for (int i = 0; i < grad_y.n; ++i)
            for (int ch = 0; ch < grad_y.c; ++ch) {
                float g = grad_y.at(i, ch, 0, 0) * scale;
                for (int y0 = 0; y0 < in_h_; ++y0)
                    for (int x0 = 0; x0 < in_w_; ++x0) grad_x.at(i, ch, y0, x0) = g;
            }
        return grad_x;
    }

  private:
    int in_h_ = 0, in_w_ = 0;
};

// Fully connected layer on (n, features) batches (h = w = 1).
class Dense {
  public:
    Dense(int in_dim, int out_dim)
        : in_(in_dim), out_(out_dim),
          weight_(static_cast<std::size_t>(in_dim) * out_dim), bias_(out_dim) {}

    void init(Rng& rng) {
        double scale = std::sqrt(2.0 / in_);
        for (auto& w : weight_.w) w = static_cast<float>(rng.normal(0.0, scale));
        std::fill(bias_.w.begin(), bias_.w.end(), 0.0f);
    }

    Batch forward(const Batch& x) {
        x_ = x;
        Batch y(x.n, out_, 1, 1);
        for (int i = 0; i < x.n; ++i) {
            const float* xi = &x.v[i * x.per_sample()];
            for (int o = 0; o < out_; ++o) {
                const float* wrow = &weight_.w[static_cast<std::size_t>(o) * in_];
                double acc = bias_.w[o];
                for (int j = 0; j < in_; ++j) acc += wrow[j] * xi[j];
                y.at(i, o, 0, 0) = static_cast<float>(acc);
            }
        }
        return y;
    }

    Batch backward(const Batch& grad_y) {
        Batch grad_x(x_.n, x_.c, x_.h, x_.w);
        for (int i = 0; i < x_.n; ++i) {
            const float* xi = &x_.v[i * x_.per_sample()];
            float* gxi = &grad_x.v[i * grad_x.per_sample()];
            for (int o = 0; o < out_; ++o) {
                float g = grad_y.at(i, o, 0, 0);
                if (g == 0.0f) continue;
                bias_.g[o] += g;
                float* gwrow = &weight_.g[static_cast<std::size_t>(o) * in_];
                const float* wrow = &weight_.w[static_cast<std::size_t>(o) * in_];
                for (int j = 0; j < in_; ++j) {
                    gwrow[j] += g * xi[j];
                    gxi[j] += g * wrow[j];
                }
            }
        }
        return grad_x;
    }

    std::vector<Param*> params() { return {&weight_, &bias_}; }
    std::vector<std::vector<float>*> buffers() { return {}; }

  private:
    int in_, out_;
    Param weight_, bias_;
    Batch x_;
};

}  // namespace con2

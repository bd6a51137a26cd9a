#include <bgr/nn.hpp>

#include <bgr/image.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace bgr::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstMatMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch size, in floats.
constexpr std::size_t kColumnBudget = std::size_t{1} << 24;

std::vector<float>& scratch(std::size_t size) {
    thread_local std::vector<float> buf;
    if (buf.size() < size) buf.resize(size);
    return buf;
}

int chunk_samples(std::size_t rows, std::size_t cols_per_sample, int batch) {
    std::size_t per = std::max<std::size_t>(1, rows * cols_per_sample);
    return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / per, 1, static_cast<std::size_t>(batch)));
}

// Index range of small-side positions o with 0 <= o*stride - pad + tap < big.
inline void valid_range(int small, int big, int tap, const ConvGeometry& g, int& lo, int& hi) {
    // o*s >= pad - tap
    int num = g.padding - tap;
    lo = num <= 0 ? 0 : (num + g.stride - 1) / g.stride;
    // o*s <= big - 1 + pad - tap
    int top = big - 1 + g.padding - tap;
    hi = top < 0 ? -1 : std::min(small - 1, top / g.stride);
}

// Gathers the big-side tensor into (C*k*k, nb*hs*ws) columns for samples [b0, b0+nb).
void im2col(const Tensor& big, int b0, int nb, int hs, int ws, const ConvGeometry& g, float* col) {
    const int k = g.kernel;
    const std::size_t cols = static_cast<std::size_t>(nb) * hs * ws;
    for (int c = 0; c < big.c; ++c) {
        const float* src = big.channel(c);
        for (int ki = 0; ki < k; ++ki) {
            int ilo, ihi;
            valid_range(hs, big.h, ki, g, ilo, ihi);
            for (int kj = 0; kj < k; ++kj) {
                int jlo, jhi;
                valid_range(ws, big.w, kj, g, jlo, jhi);
                float* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * cols;
                std::fill(row, row + cols, 0.f);
                if (ihi < ilo || jhi < jlo) continue;
                for (int bb = 0; bb < nb; ++bb) {
                    const float* img = src + static_cast<std::size_t>(b0 + bb) * big.image();
                    float* dst = row + static_cast<std::size_t>(bb) * hs * ws;
                    for (int oi = ilo; oi <= ihi; ++oi) {
                        const float* line = img + static_cast<std::size_t>(oi * g.stride - g.padding + ki) * big.w;
                        float* out = dst + static_cast<std::size_t>(oi) * ws;
                        int jj = jlo * g.stride - g.padding + kj;
                        for (int oj = jlo; oj <= jhi; ++oj, jj += g.stride) out[oj] = line[jj];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters columns back into the big-side tensor (accumulating).
void col2im(const float* col, int b0, int nb, int hs, int ws, const ConvGeometry& g, Tensor& big) {
    const int k = g.kernel;
    const std::size_t cols = static_cast<std::size_t>(nb) * hs * ws;
    for (int c = 0; c < big.c; ++c) {
        float* dst = big.channel(c);
        for (int ki = 0; ki < k; ++ki) {
            int ilo, ihi;
            valid_range(hs, big.h, ki, g, ilo, ihi);
            for (int kj = 0; kj < k; ++kj) {
                int jlo, jhi;
                valid_range(ws, big.w, kj, g, jlo, jhi);
                if (ihi < ilo || jhi < jlo) continue;
                const float* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * cols;
                for (int bb = 0; bb < nb; ++bb) {
                    float* img = dst + static_cast<std::size_t>(b0 + bb) * big.image();
                    const float* src = row + static_cast<std::size_t>(bb) * hs * ws;
                    for (int oi = ilo; oi <= ihi; ++oi) {
                        float* line = img + static_cast<std::size_t>(oi * g.stride - g.padding + ki) * big.w;
                        const float* in = src + static_cast<std::size_t>(oi) * ws;
                        int jj = jlo * g.stride - g.padding + kj;
                        for (int oj = jlo; oj <= jhi; ++oj, jj += g.stride) line[jj] += in[oj];
                    }
                }
            }
        }
    }
}

void add_bias(Tensor& t, std::span<const float> bias) {
    for (int c = 0; c < t.c; ++c) {
        float* p = t.channel(c);
        const float b = bias[c];
        for (std::size_t i = 0; i < t.plane(); ++i) p[i] += b;
    }
}

void accumulate_bias_grad(const Tensor& d, std::span<float> dbias) {
    for (int c = 0; c < d.c; ++c) {
        const float* p = d.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < d.plane(); ++i) s += p[i];
        dbias[c] += static_cast<float>(s);
    }
}

void check(bool ok, const char* what) {
    if (!ok) throw Error(what);
}

}  // namespace

void conv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, ConvGeometry g,
                  Tensor& out) {
    const int k = g.kernel;
    const std::size_t rows = static_cast<std::size_t>(in.c) * k * k;
    check(weight.size() == static_cast<std::size_t>(out.c) * rows, "conv weight size mismatch");
    check(out.n == in.n && out.h == g.conv_output(in.h) && out.w == g.conv_output(in.w), "conv output shape");
    const std::size_t hw = out.image();
    const int step = chunk_samples(rows, hw, in.n);
    ConstMatMap wm(weight.data(), out.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    for (int b0 = 0; b0 < in.n; b0 += step) {
        const int nb = std::min(step, in.n - b0);
        const std::size_t m = nb * hw;
        auto& col = scratch(rows * m);
        im2col(in, b0, nb, out.h, out.w, g, col.data());
        ConstMatMap cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m),
                       Eigen::OuterStride<>(m));
        MatMap om(out.v.data() + b0 * hw, out.c, static_cast<Eigen::Index>(m), Eigen::OuterStride<>(out.plane()));
        om.noalias() = wm * cm;
    }
    add_bias(out, bias);
}

void conv_backward(const Tensor& in, std::span<const float> weight, ConvGeometry g, const Tensor& dout,
                   std::span<float> dweight, std::span<float> dbias, Tensor* din) {
    const int k = g.kernel;
    const std::size_t rows = static_cast<std::size_t>(in.c) * k * k;
    const std::size_t hw = dout.image();
    const int step = chunk_samples(rows, hw, in.n);
    ConstMatMap wm(weight.data(), dout.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    MatMap dwm(dweight.data(), dout.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    if (din) din->reshape(in.c, in.n, in.h, in.w);
    for (int b0 = 0; b0 < in.n; b0 += step) {
        const int nb = std::min(step, in.n - b0);
        const std::size_t m = nb * hw;
        auto& col = scratch(rows * m);
        im2col(in, b0, nb, dout.h, dout.w, g, col.data());
        ConstMatMap cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m),
                       Eigen::OuterStride<>(m));
        ConstMatMap dm(dout.v.data() + b0 * hw, dout.c, static_cast<Eigen::Index>(m),
                       Eigen::OuterStride<>(dout.plane()));
        dwm.noalias() += dm * cm.transpose();
        if (din) {
            MatMap dcol(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m),
                        Eigen::OuterStride<>(m));
            dcol.noalias() = wm.transpose() * dm;
            col2im(col.data(), b0, nb, dout.h, dout.w, g, *din);
        }
    }
    accumulate_bias_grad(dout, dbias);
}

void tconv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, ConvGeometry g,
                   Tensor& out) {
    const int k = g.kernel;
    const std::size_t rows = static_cast<std::size_t>(out.c) * k * k;
    check(weight.size() == static_cast<std::size_t>(in.c) * rows, "transposed conv weight size mismatch");
    check(out.n == in.n, "transposed conv batch mismatch");
    const std::size_t hw = in.image();
    const int step = chunk_samples(rows, hw, in.n);
    ConstMatMap wm(weight.data(), in.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    std::fill(out.v.begin(), out.v.end(), 0.f);
    for (int b0 = 0; b0 < in.n; b0 += step) {
        const int nb = std::min(step, in.n - b0);
        const std::size_t m = nb * hw;
        auto& col = scratch(rows * m);
        ConstMatMap xm(in.v.data() + b0 * hw, in.c, static_cast<Eigen::Index>(m), Eigen::OuterStride<>(in.plane()));
        MatMap cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m), Eigen::OuterStride<>(m));
        cm.noalias() = wm.transpose() * xm;
        col2im(col.data(), b0, nb, in.h, in.w, g, out);
    }
    add_bias(out, bias);
}

void tconv_backward(const Tensor& in, std::span<const float> weight, ConvGeometry g, const Tensor& dout,
                    std::span<float> dweight, std::span<float> dbias, Tensor* din) {
    const int k = g.kernel;
    const std::size_t rows = static_cast<std::size_t>(dout.c) * k * k;
    const std::size_t hw = in.image();
    const int step = chunk_samples(rows, hw, in.n);
    ConstMatMap wm(weight.data(), in.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    MatMap dwm(dweight.data(), in.c, static_cast<Eigen::Index>(rows), Eigen::OuterStride<>(rows));
    if (din) din->reshape(in.c, in.n, in.h, in.w);
    for (int b0 = 0; b0 < in.n; b0 += step) {
        const int nb = std::min(step, in.n - b0);
        const std::size_t m = nb * hw;
        auto& col = scratch(rows * m);
        im2col(dout, b0, nb, in.h, in.w, g, col.data());
        ConstMatMap cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m),
                       Eigen::OuterStride<>(m));
        ConstMatMap xm(in.v.data() + b0 * hw, in.c, static_cast<Eigen::Index>(m), Eigen::OuterStride<>(in.plane()));
        dwm.noalias() += xm * cm.transpose();
        if (din) {
            MatMap dm(din->v.data() + b0 * hw, in.c, static_cast<Eigen::Index>(m), Eigen::OuterStride<>(in.plane()));
            dm.noalias() = wm * cm;
        }
    }
    accumulate_bias_grad(dout, dbias);
}

void group_norm_forward(const Tensor& x, int groups, std::span<const float> gamma, std::span<const float> beta,
                        Tensor& xhat, Tensor& y, GroupNormCache& cache) {
    check(groups > 0 && x.c % groups == 0, "group count must divide channel count");
    const int cg = x.c / groups;
    const std::size_t hw = x.image();
    xhat.reshape(x.c, x.n, x.h, x.w);
    y.reshape(x.c, x.n, x.h, x.w);
    cache.rstd.assign(static_cast<std::size_t>(x.n) * groups, 0.f);
    const double count = static_cast<double>(cg) * hw;
    for (int b = 0; b < x.n; ++b) {
        for (int grp = 0; grp < groups; ++grp) {
            double sum = 0.0;
            for (int c = grp * cg; c < (grp + 1) * cg; ++c) {
                const float* p = x.channel(c) + b * hw;
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            const double mean = sum / count;
            double sq = 0.0;
            for (int c = grp * cg; c < (grp + 1) * cg; ++c) {
                const float* p = x.channel(c) + b * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    double d = p[i] - mean;
                    sq += d * d;
                }
            }
            const float rstd = static_cast<float>(1.0 / std::sqrt(sq / count + kGroupNormEps));
            const float fmean = static_cast<float>(mean);
            cache.rstd[static_cast<std::size_t>(b) * groups + grp] = rstd;
            for (int c = grp * cg; c < (grp + 1) * cg; ++c) {
                const float* p = x.channel(c) + b * hw;
                float* xh = xhat.channel(c) + b * hw;
                float* yy = y.channel(c) + b * hw;
                const float ga = gamma[c], be = beta[c];
                for (std::size_t i = 0; i < hw; ++i) {
                    xh[i] = (p[i] - fmean) * rstd;
                    yy[i] = ga * xh[i] + be;
                }
            }
        }
    }
}

void group_norm_backward(const Tensor& xhat, int groups, std::span<const float> gamma, const GroupNormCache& cache,
                         const Tensor& dy, std::span<float> dgamma, std::span<float> dbeta, Tensor& dx) {
    const int cg = xhat.c / groups;
    const std::size_t hw = xhat.image();
    dx.reshape(xhat.c, xhat.n, xhat.h, xhat.w);
    const double count = static_cast<double>(cg) * hw;
    for (int c = 0; c < xhat.c; ++c) {
        const float* d = dy.channel(c);
        const float* xh = xhat.channel(c);
        double sg = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < xhat.plane(); ++i) {
            sg += static_cast<double>(d[i]) * xh[i];
            sb += d[i];
        }
        dgamma[c] += static_cast<float>(sg);
        dbeta[c] += static_cast<float>(sb);
    }
    for (int b = 0; b < xhat.n; ++b) {
        for (int grp = 0; grp < groups; ++grp) {
            double s1 = 0.0, s2 = 0.0;
            for (int c = grp * cg; c < (grp + 1) * cg; ++c) {
                const float* d = dy.channel(c) + b * hw;
                const float* xh = xhat.channel(c) + b * hw;
                const double ga = gamma[c];
                for (std::size_t i = 0; i < hw; ++i) {
                    double dxh = d[i] * ga;
                    s1 += dxh;
                    s2 += dxh * xh[i];
                }
            }
            const float m1 = static_cast<float>(s1 / count);
            const float m2 = static_cast<float>(s2 / count);
            const float rstd = cache.rstd[static_cast<std::size_t>(b) * groups + grp];
            for (int c = grp * cg; c < (grp + 1) * cg; ++c) {
                const float* d = dy.channel(c) + b * hw;
                const float* xh = xhat.channel(c) + b * hw;
                float* out = dx.channel(c) + b * hw;
                const float ga = gamma[c];
                for (std::size_t i = 0; i < hw; ++i) out[i] = rstd * (d[i] * ga - m1 - xh[i] * m2);
            }
        }
    }
}

void celu_forward(const Tensor& y, Tensor& a) {
    a.reshape(y.c, y.n, y.h, y.w);
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const float v = y.v[i];
        a.v[i] = v > 0.f ? v : std::expm1(v);
    }
}

void celu_backward(const Tensor& y, Tensor& da) {
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const float v = y.v[i];
        if (v <= 0.f) da.v[i] *= std::exp(v);
    }
}

void sigmoid_forward(const Tensor& z, Tensor& a) {
    a.reshape(z.c, z.n, z.h, z.w);
    for (std::size_t i = 0; i < z.v.size(); ++i) a.v[i] = 1.f / (1.f + std::exp(-z.v[i]));
}

void sigmoid_backward(const Tensor& a, Tensor& da) {
    for (std::size_t i = 0; i < a.v.size(); ++i) da.v[i] *= a.v[i] * (1.f - a.v[i]);
}

}  // namespace bgr::nn

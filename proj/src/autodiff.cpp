#include "planenav/autodiff.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace planenav::ad {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

double softplus(double x) {
    // log(1 + e^x) without overflow for large |x|.
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

int Tape::leaf(std::vector<double> val, bool needs_grad) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.val.size()) n.grad.assign(n.val.size(), 0.0);
    return n.grad;
}

int Tape::push(std::vector<double> val, std::function<void(Tape&)> back) {
    Node n;
    n.val = std::move(val);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(int loss_id) {
    if (size(loss_id) != 1) throw std::runtime_error("backward: loss must be scalar");
    grad(loss_id)[0] = 1.0;
    for (int id = loss_id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.back && !n.grad.empty()) n.back(*this);
    }
}

int Tape::conv3d(int x, int w, int b, int ci, int co, int d, int h, int wd, int stride) {
    const int od = out_size(d, stride), oh = out_size(h, stride), ow = out_size(wd, stride);
    const std::vector<double>& xv = val(x);
    const std::vector<double>& wv = val(w);
    const std::vector<double>& bv = val(b);
    std::vector<double> y(static_cast<std::size_t>(co) * od * oh * ow);

    auto xi = [=](int c, int zz, int yy, int xx) {
        return ((static_cast<std::size_t>(c) * d + zz) * h + yy) * wd + xx;
    };
    auto wi = [=](int o, int c, int kz, int ky, int kx) {
        return (((static_cast<std::size_t>(o) * ci + c) * 3 + kz) * 3 + ky) * 3 + kx;
    };

    std::size_t oidx = 0;
    for (int o = 0; o < co; ++o)
        for (int zz = 0; zz < od; ++zz)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx, ++oidx) {
                    double acc = bv[o];
                    for (int c = 0; c < ci; ++c)
                        for (int kz = 0; kz < 3; ++kz) {
                            const int iz = zz * stride - 1 + kz;
                            if (iz < 0 || iz >= d) continue;
                            for (int ky = 0; ky < 3; ++ky) {
                                const int iy = yy * stride - 1 + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int ix = xx * stride - 1 + kx;
                                    if (ix < 0 || ix >= wd) continue;
                                    acc += xv[xi(c, iz, iy, ix)] * wv[wi(o, c, kz, ky, kx)];
                                }
                            }
                        }
                    y[oidx] = acc;
                }

    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double> gy = t.grad(yid);
        std::vector<double>& gx = t.grad(x);
        std::vector<double>& gw = t.grad(w);
        std::vector<double>& gb = t.grad(b);
        const std::vector<double>& xv2 = t.val(x);
        const std::vector<double>& wv2 = t.val(w);
        std::size_t oi = 0;
        for (int o = 0; o < co; ++o)
            for (int zz = 0; zz < od; ++zz)
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx, ++oi) {
                        const double g = gy[oi];
                        if (g == 0.0) continue;
                        gb[o] += g;
                        for (int c = 0; c < ci; ++c)
                            for (int kz = 0; kz < 3; ++kz) {
                                const int iz = zz * stride - 1 + kz;
                                if (iz < 0 || iz >= d) continue;
                                for (int ky = 0; ky < 3; ++ky) {
                                    const int iy = yy * stride - 1 + ky;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int kx = 0; kx < 3; ++kx) {
                                        const int ix = xx * stride - 1 + kx;
                                        if (ix < 0 || ix >= wd) continue;
                                        const std::size_t xidx = xi(c, iz, iy, ix);
                                        gx[xidx] += g * wv2[wi(o, c, kz, ky, kx)];
                                        gw[wi(o, c, kz, ky, kx)] += g * xv2[xidx];
                                    }
                                }
                            }
                    }
    };
    return yid;
}

int Tape::proj3d(int x, int w, int b, int ci, int co, int d, int h, int wd, int stride) {
    const int od = out_size(d, stride), oh = out_size(h, stride), ow = out_size(wd, stride);
    const std::vector<double>& xv = val(x);
    const std::vector<double>& wv = val(w);
    const std::vector<double>& bv = val(b);
    std::vector<double> y(static_cast<std::size_t>(co) * od * oh * ow);

    auto xi = [=](int c, int zz, int yy, int xx) {
        return ((static_cast<std::size_t>(c) * d + zz) * h + yy) * wd + xx;
    };
    std::size_t oidx = 0;
    for (int o = 0; o < co; ++o)
        for (int zz = 0; zz < od; ++zz)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx, ++oidx) {
                    double acc = bv[o];
                    for (int c = 0; c < ci; ++c)
                        acc += xv[xi(c, zz * stride, yy * stride, xx * stride)] *
                               wv[static_cast<std::size_t>(o) * ci + c];
                    y[oidx] = acc;
                }

    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double> gy = t.grad(yid);
        std::vector<double>& gx = t.grad(x);
        std::vector<double>& gw = t.grad(w);
        std::vector<double>& gb = t.grad(b);
        const std::vector<double>& xv2 = t.val(x);
        const std::vector<double>& wv2 = t.val(w);
        std::size_t oi = 0;
        for (int o = 0; o < co; ++o)
            for (int zz = 0; zz < od; ++zz)
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx, ++oi) {
                        const double g = gy[oi];
                        if (g == 0.0) continue;
                        gb[o] += g;
                        for (int c = 0; c < ci; ++c) {
                            const std::size_t idx = xi(c, zz * stride, yy * stride, xx * stride);
                            gx[idx] += g * wv2[static_cast<std::size_t>(o) * ci + c];
                            gw[static_cast<std::size_t>(o) * ci + c] += g * xv2[idx];
                        }
                    }
    };
    return yid;
}

int Tape::subsample2(int x, int c, int d, int h, int wd) {
    const int od = out_size(d, 2), oh = out_size(h, 2), ow = out_size(wd, 2);
    const std::vector<double>& xv = val(x);
    std::vector<double> y(static_cast<std::size_t>(c) * od * oh * ow);
    auto xi = [=](int cc, int zz, int yy, int xx) {
        return ((static_cast<std::size_t>(cc) * d + zz) * h + yy) * wd + xx;
    };
    std::size_t oi = 0;
    for (int cc = 0; cc < c; ++cc)
        for (int zz = 0; zz < od; ++zz)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx, ++oi) y[oi] = xv[xi(cc, zz * 2, yy * 2, xx * 2)];

    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        std::vector<double>& gx = t.grad(x);
        std::size_t oi2 = 0;
        for (int cc = 0; cc < c; ++cc)
            for (int zz = 0; zz < od; ++zz)
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx, ++oi2)
                        gx[xi(cc, zz * 2, yy * 2, xx * 2)] += gy[oi2];
    };
    return yid;
}

int Tape::add(int a, int b) {
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    if (av.size() != bv.size()) throw std::runtime_error("add: size mismatch");
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        std::vector<double>& ga = t.grad(a);
        std::vector<double>& gb = t.grad(b);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
        }
    };
    return yid;
}

int Tape::relu(int x) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0 ? xv[i] : 0.0;
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& xv2 = t.val(x);
        std::vector<double>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i)
            if (xv2[i] > 0) gx[i] += gy[i];
    };
    return yid;
}

int Tape::sigmoid(int x) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& yv = t.val(yid);
        std::vector<double>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    };
    return yid;
}

int Tape::tanh_op(int x) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& yv = t.val(yid);
        std::vector<double>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    };
    return yid;
}

int Tape::mul(int a, int b) {
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    if (av.size() != bv.size()) throw std::runtime_error("mul: size mismatch");
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& av2 = t.val(a);
        const std::vector<double>& bv2 = t.val(b);
        std::vector<double>& ga = t.grad(a);
        std::vector<double>& gb = t.grad(b);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i] * bv2[i];
            gb[i] += gy[i] * av2[i];
        }
    };
    return yid;
}

int Tape::slice(int x, int offset, int len) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.begin() + offset, xv.begin() + offset + len);
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        std::vector<double>& gx = t.grad(x);
        for (int i = 0; i < len; ++i) gx[offset + i] += gy[i];
    };
    return yid;
}

int Tape::linear(int x, int w, int b, int in, int out) {
    const std::vector<double>& xv = val(x);
    const std::vector<double>& wv = val(w);
    const std::vector<double>& bv = val(b);
    if (static_cast<int>(xv.size()) != in) throw std::runtime_error("linear: input size mismatch");
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
        double acc = bv[o];
        const double* row = &wv[static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) acc += row[i] * xv[i];
        y[o] = acc;
    }
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& xv2 = t.val(x);
        const std::vector<double>& wv2 = t.val(w);
        std::vector<double>& gx = t.grad(x);
        std::vector<double>& gw = t.grad(w);
        std::vector<double>& gb = t.grad(b);
        for (int o = 0; o < out; ++o) {
            const double g = gy[o];
            if (g == 0.0) continue;
            gb[o] += g;
            const double* row = &wv2[static_cast<std::size_t>(o) * in];
            double* grow = &gw[static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) {
                gx[i] += g * row[i];
                grow[i] += g * xv2[i];
            }
        }
    };
    return yid;
}

int Tape::softsign(int x) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] / (1.0 + std::abs(xv[i]));
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& xv2 = t.val(x);
        std::vector<double>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            const double d = 1.0 + std::abs(xv2[i]);
            gx[i] += gy[i] / (d * d);
        }
    };
    return yid;
}

int Tape::softplus_shift(int x, double shift) {
    const std::vector<double>& xv = val(x);
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = softplus(xv[i]) + shift;
    const int yid = push(std::move(y), nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const std::vector<double>& gy = t.grad(yid);
        const std::vector<double>& xv2 = t.val(x);
        std::vector<double>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx[i] += gy[i] / (1.0 + std::exp(-xv2[i]));  // sigmoid(x)
    };
    return yid;
}

int Tape::gaussian_nll(int mu, int sigma, std::vector<double> z, double coef) {
    const std::vector<double>& mv = val(mu);
    const std::vector<double>& sv = val(sigma);
    double logp = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z[i] - mv[i];
        logp += -0.5 * std::log(kTwoPi * sv[i] * sv[i]) - d * d / (2.0 * sv[i] * sv[i]);
    }
    const int yid = push({-coef * logp}, nullptr);
    nodes_[yid].back = [=, zz = std::move(z)](Tape& t) {
        const double g = t.grad(yid)[0];
        const std::vector<double>& mv2 = t.val(mu);
        const std::vector<double>& sv2 = t.val(sigma);
        std::vector<double>& gm = t.grad(mu);
        std::vector<double>& gs = t.grad(sigma);
        for (std::size_t i = 0; i < zz.size(); ++i) {
            const double d = zz[i] - mv2[i];
            const double s = sv2[i];
            gm[i] += g * (-coef) * d / (s * s);
            gs[i] += g * (-coef) * (d * d - s * s) / (s * s * s);
        }
    };
    return yid;
}

int Tape::neg_entropy(int sigma, double eta) {
    const std::vector<double>& sv = val(sigma);
    double h = 0.0;
    for (double s : sv) h += 0.5 * std::log(kTwoPi * s * s) + 0.5;
    const int yid = push({-eta * h}, nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const double g = t.grad(yid)[0];
        const std::vector<double>& sv2 = t.val(sigma);
        std::vector<double>& gs = t.grad(sigma);
        for (std::size_t i = 0; i < sv2.size(); ++i) gs[i] += g * (-eta) / sv2[i];
    };
    return yid;
}

int Tape::squared_value_error(int g, double target, double coef) {
    const double gv = val(g)[0];
    const double d = target - gv;
    const int yid = push({coef * 0.5 * d * d}, nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const double gg = t.grad(yid)[0];
        t.grad(g)[0] += gg * coef * (t.val(g)[0] - target);
    };
    return yid;
}

int Tape::add_scalars(const std::vector<int>& ids) {
    double acc = 0.0;
    for (int id : ids) acc += val(id)[0];
    const int yid = push({acc}, nullptr);
    nodes_[yid].back = [=](Tape& t) {
        const double g = t.grad(yid)[0];
        for (int id : ids) t.grad(id)[0] += g;
    };
    return yid;
}

}  // namespace planenav::ad

#include "recsm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace recsm {

namespace {

inline int64_t lead_count(const Tensor& t) {
    int64_t n = 1;
    for (int i = 0; i + 2 < t.rank(); ++i) n *= t.dim(i);
    return n;
}

struct ResampleIdx {
    std::vector<int> i0;
    std::vector<double> frac;
};

// align-corners mapping: every sample position lies inside the source grid,
// so constants are preserved exactly.
ResampleIdx bilinear_axis(int in_n, int out_n) {
    ResampleIdx r;
    r.i0.resize(static_cast<size_t>(out_n));
    r.frac.resize(static_cast<size_t>(out_n));
    for (int o = 0; o < out_n; ++o) {
        double src = (out_n > 1) ? static_cast<double>(o) * (in_n - 1) / (out_n - 1) : 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in_n - 2) i0 = std::max(0, in_n - 2);
        r.i0[static_cast<size_t>(o)] = i0;
        r.frac[static_cast<size_t>(o)] = (in_n > 1) ? src - i0 : 0.0;
    }
    return r;
}

void conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y, int s, int p, int dl) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = y.dim(1), Wo = y.dim(2);
    for (int o = 0; o < O; ++o) {
        double* yo = y.data() + static_cast<int64_t>(o) * Ho * Wo;
        const double bv = b[o];
        for (int i = 0; i < Ho * Wo; ++i) yo[i] = bv;
    }
    for (int o = 0; o < O; ++o) {
        double* yo = y.data() + static_cast<int64_t>(o) * Ho * Wo;
        for (int c = 0; c < C; ++c) {
            const double* xc = x.data() + static_cast<int64_t>(c) * H * W;
            for (int ky = 0; ky < kh; ++ky) {
                const int dy = ky * dl - p;
                int oy_lo = 0;
                while (oy_lo < Ho && oy_lo * s + dy < 0) ++oy_lo;
                int oy_hi = Ho - 1;
                while (oy_hi >= 0 && oy_hi * s + dy >= H) --oy_hi;
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = w.at4(o, c, ky, kx);
                    if (wv == 0.0) continue;
                    const int dx = kx * dl - p;
                    int ox_lo = 0;
                    while (ox_lo < Wo && ox_lo * s + dx < 0) ++ox_lo;
                    int ox_hi = Wo - 1;
                    while (ox_hi >= 0 && ox_hi * s + dx >= W) --ox_hi;
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const double* xrow = xc + static_cast<int64_t>(oy * s + dy) * W;
                        double* yrow = yo + static_cast<int64_t>(oy) * Wo;
                        if (s == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox + dx];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox * s + dx];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb, int s,
                int p, int dl) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = gy.dim(1), Wo = gy.dim(2);
    if (gb) {
        for (int o = 0; o < O; ++o) {
            const double* gyo = gy.data() + static_cast<int64_t>(o) * Ho * Wo;
            double acc = 0.0;
            for (int i = 0; i < Ho * Wo; ++i) acc += gyo[i];
            (*gb)[o] += acc;
        }
    }
    for (int o = 0; o < O; ++o) {
        const double* gyo = gy.data() + static_cast<int64_t>(o) * Ho * Wo;
        for (int c = 0; c < C; ++c) {
            const double* xc = x.data() + static_cast<int64_t>(c) * H * W;
            double* gxc = gx ? gx->data() + static_cast<int64_t>(c) * H * W : nullptr;
            for (int ky = 0; ky < kh; ++ky) {
                const int dy = ky * dl - p;
                int oy_lo = 0;
                while (oy_lo < Ho && oy_lo * s + dy < 0) ++oy_lo;
                int oy_hi = Ho - 1;
                while (oy_hi >= 0 && oy_hi * s + dy >= H) --oy_hi;
                for (int kx = 0; kx < kw; ++kx) {
                    const int dx = kx * dl - p;
                    int ox_lo = 0;
                    while (ox_lo < Wo && ox_lo * s + dx < 0) ++ox_lo;
                    int ox_hi = Wo - 1;
                    while (ox_hi >= 0 && ox_hi * s + dx >= W) --ox_hi;
                    const double wv = w.at4(o, c, ky, kx);
                    double wacc = 0.0;
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const double* xrow = xc + static_cast<int64_t>(oy * s + dy) * W;
                        double* gxrow = gxc ? gxc + static_cast<int64_t>(oy * s + dy) * W : nullptr;
                        const double* gyrow = gyo + static_cast<int64_t>(oy) * Wo;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                            const int ix = ox * s + dx;
                            const double g = gyrow[ox];
                            wacc += g * xrow[ix];
                            if (gxrow) gxrow[ix] += wv * g;
                        }
                    }
                    if (gw) gw->at4(o, c, ky, kx) += wacc;
                }
            }
        }
    }
}

void conv3d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y, int p) {
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int64_t plane = static_cast<int64_t>(D) * H * W;
    for (int o = 0; o < O; ++o) {
        double* yo = y.data() + o * plane;
        const double bv = b[o];
        for (int64_t i = 0; i < plane; ++i) yo[i] = bv;
    }
    for (int o = 0; o < O; ++o) {
        double* yo = y.data() + o * plane;
        for (int c = 0; c < C; ++c) {
            const double* xc = x.data() + c * plane;
            for (int kz = 0; kz < kd; ++kz) {
                const int dz = kz - p;
                for (int ky = 0; ky < kh; ++ky) {
                    const int dy = ky - p;
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = w.data()[(((static_cast<int64_t>(o) * C + c) * kd + kz) * kh + ky) * kw + kx];
                        if (wv == 0.0) continue;
                        const int dx = kx - p;
                        const int lo = std::max(0, -dx), hi = std::min(W - 1, W - 1 - dx);
                        for (int od = std::max(0, -dz); od <= std::min(D - 1, D - 1 - dz); ++od) {
                            for (int oh = std::max(0, -dy); oh <= std::min(H - 1, H - 1 - dy); ++oh) {
                                const double* xrow = xc + (static_cast<int64_t>(od + dz) * H + (oh + dy)) * W + dx;
                                double* yrow = yo + (static_cast<int64_t>(od) * H + oh) * W;
                                for (int ox = lo; ox <= hi; ++ox) yrow[ox] += wv * xrow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv3d_bwd(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw, Tensor* gb, int p) {
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int64_t plane = static_cast<int64_t>(D) * H * W;
    if (gb) {
        for (int o = 0; o < O; ++o) {
            const double* gyo = gy.data() + o * plane;
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) acc += gyo[i];
            (*gb)[o] += acc;
        }
    }
    for (int o = 0; o < O; ++o) {
        const double* gyo = gy.data() + o * plane;
        for (int c = 0; c < C; ++c) {
            const double* xc = x.data() + c * plane;
            double* gxc = gx ? gx->data() + c * plane : nullptr;
            for (int kz = 0; kz < kd; ++kz) {
                const int dz = kz - p;
                for (int ky = 0; ky < kh; ++ky) {
                    const int dy = ky - p;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int64_t widx = (((static_cast<int64_t>(o) * C + c) * kd + kz) * kh + ky) * kw + kx;
                        const double wv = w.data()[widx];
                        const int dx = kx - p;
                        const int lo = std::max(0, -dx), hi = std::min(W - 1, W - 1 - dx);
                        double wacc = 0.0;
                        for (int od = std::max(0, -dz); od <= std::min(D - 1, D - 1 - dz); ++od) {
                            for (int oh = std::max(0, -dy); oh <= std::min(H - 1, H - 1 - dy); ++oh) {
                                const int64_t xoff = (static_cast<int64_t>(od + dz) * H + (oh + dy)) * W + dx;
                                const double* xrow = xc + xoff;
                                double* gxrow = gxc ? gxc + xoff : nullptr;
                                const double* gyrow = gyo + (static_cast<int64_t>(od) * H + oh) * W;
                                for (int ox = lo; ox <= hi; ++ox) {
                                    const double g = gyrow[ox];
                                    wacc += g * xrow[ox];
                                    if (gxrow) gxrow[ox] += wv * g;
                                }
                            }
                        }
                        if (gw) gw->data()[widx] += wacc;
                    }
                }
            }
        }
    }
}

// forward sample of feat(c, y, x - d(y,x)), zero outside; optionally
// accumulates gradients.
void warp_fwd(const Tensor& feat, const double* disp, double offset, Tensor& out) {
    const int C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double sx = x - (disp[static_cast<int64_t>(y) * W + x] + offset);
            const int x0 = static_cast<int>(std::floor(sx));
            const double f = sx - x0;
            const bool in0 = (x0 >= 0 && x0 < W), in1 = (x0 + 1 >= 0 && x0 + 1 < W);
            for (int c = 0; c < C; ++c) {
                const double* fc = feat.data() + (static_cast<int64_t>(c) * H + y) * W;
                double v = 0.0;
                if (in0) v += (1.0 - f) * fc[x0];
                if (in1) v += f * fc[x0 + 1];
                out.data()[(static_cast<int64_t>(c) * H + y) * W + x] = v;
            }
        }
    }
}

void warp_bwd(const Tensor& feat, const double* disp, double offset, const Tensor& gout, Tensor* gfeat,
              double* gdisp) {
    const int C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double sx = x - (disp[static_cast<int64_t>(y) * W + x] + offset);
            const int x0 = static_cast<int>(std::floor(sx));
            const double f = sx - x0;
            const bool in0 = (x0 >= 0 && x0 < W), in1 = (x0 + 1 >= 0 && x0 + 1 < W);
            double dacc = 0.0;
            for (int c = 0; c < C; ++c) {
                const int64_t row = (static_cast<int64_t>(c) * H + y) * W;
                const double g = gout.data()[row + x];
                const double v0 = in0 ? feat.data()[row + x0] : 0.0;
                const double v1 = in1 ? feat.data()[row + x0 + 1] : 0.0;
                if (gfeat) {
                    if (in0) gfeat->data()[row + x0] += (1.0 - f) * g;
                    if (in1) gfeat->data()[row + x0 + 1] += f * g;
                }
                // d out / d disp = v0 - v1 (sample position moves left as d grows)
                dacc += g * (v0 - v1);
            }
            if (gdisp) gdisp[static_cast<int64_t>(y) * W + x] += dacc;
        }
    }
}

}  // namespace

Graph::Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (Var p : n.parents)
        if (nodes_[static_cast<size_t>(p)].needs_grad) n.needs_grad = true;
    if (n.needs_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Graph::Var Graph::input(Tensor v) {
    Node n;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Graph::Var Graph::param(const Tensor& v, Tensor* grad_sink) {
    Node n;
    n.value = v;
    n.grad = Tensor::zeros(v.shape());
    n.sink = grad_sink;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

void Graph::backward(Var scalar_loss) {
    Node& ln = node(scalar_loss);
    if (ln.value.size() != 1) throw ShapeError("backward expects a scalar loss");
    if (!ln.needs_grad) return;
    ln.grad[0] = 1.0;
    for (Var v = scalar_loss; v >= 0; --v) {
        Node& n = node(v);
        if (!n.needs_grad) continue;
        if (n.back) n.back(*this);
        if (n.sink) {
            for (int64_t i = 0; i < n.grad.size(); ++i) (*n.sink)[i] += n.grad[i];
        }
    }
}

Graph::Var Graph::add(Var a, Var b) { return add_scaled(a, 1.0, b, 1.0); }
Graph::Var Graph::sub(Var a, Var b) { return add_scaled(a, 1.0, b, -1.0); }

Graph::Var Graph::add_scaled(Var a, double ca, Var b, double cb) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (!va.same_shape(vb)) throw ShapeError("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = ca * va[i] + cb * vb[i];
    Var r = make(std::move(out), {a, b}, nullptr);
    if (needs(r)) {
        node(r).back = [a, b, r, ca, cb](Graph& g) {
            const Tensor& go = g.gref(r);
            if (g.needs(a)) {
                Tensor& ga = g.gref(a);
                for (int64_t i = 0; i < go.size(); ++i) ga[i] += ca * go[i];
            }
            if (g.needs(b)) {
                Tensor& gb = g.gref(b);
                for (int64_t i = 0; i < go.size(); ++i) gb[i] += cb * go[i];
            }
        };
    }
    return r;
}

Graph::Var Graph::scale(Var a, double c) {
    const Tensor& va = val(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = c * va[i];
    Var r = make(std::move(out), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r, c](Graph& g) {
            const Tensor& go = g.gref(r);
            if (g.needs(a)) {
                Tensor& ga = g.gref(a);
                for (int64_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
            }
        };
    }
    return r;
}

Graph::Var Graph::affine(Var a, double mul, double shift) {
    const Tensor& va = val(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = mul * va[i] + shift;
    Var r = make(std::move(out), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r, mul](Graph& g) {
            const Tensor& go = g.gref(r);
            Tensor& ga = g.gref(a);
            for (int64_t i = 0; i < go.size(); ++i) ga[i] += mul * go[i];
        };
    }
    return r;
}

Graph::Var Graph::mul(Var a, Var b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (!va.same_shape(vb)) throw ShapeError("mul: shape mismatch");
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    Var r = make(std::move(out), {a, b}, nullptr);
    if (needs(r)) {
        node(r).back = [a, b, r](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& va = g.val(a);
            const Tensor& vb = g.val(b);
            if (g.needs(a)) {
                Tensor& ga = g.gref(a);
                for (int64_t i = 0; i < go.size(); ++i) ga[i] += vb[i] * go[i];
            }
            if (g.needs(b)) {
                Tensor& gb = g.gref(b);
                for (int64_t i = 0; i < go.size(); ++i) gb[i] += va[i] * go[i];
            }
        };
    }
    return r;
}

Graph::Var Graph::relu(Var a) {
    const Tensor& va = val(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    Var r = make(std::move(out), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& va = g.val(a);
            Tensor& ga = g.gref(a);
            for (int64_t i = 0; i < go.size(); ++i)
                if (va[i] > 0.0) ga[i] += go[i];
        };
    }
    return r;
}

Graph::Var Graph::sigmoid(Var a) {
    const Tensor& va = val(a);
    Tensor out(va.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-va[i]));
    Var r = make(std::move(out), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& vo = g.val(r);
            Tensor& ga = g.gref(a);
            for (int64_t i = 0; i < go.size(); ++i) ga[i] += vo[i] * (1.0 - vo[i]) * go[i];
        };
    }
    return r;
}

Graph::Var Graph::reshape(Var a, std::vector<int> shape) {
    const Tensor& va = val(a);
    if (shape_numel(shape) != va.size()) throw ShapeError("reshape: element count mismatch");
    Tensor out(shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i];
    Var r = make(std::move(out), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r](Graph& g) {
            const Tensor& go = g.gref(r);
            Tensor& ga = g.gref(a);
            for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return r;
}

Graph::Var Graph::concat_c(Var a, Var b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.rank() != vb.rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 1; i < va.rank(); ++i)
        if (va.dim(i) != vb.dim(i)) throw ShapeError("concat: trailing shape mismatch");
    std::vector<int> shape = va.shape();
    shape[0] += vb.dim(0);
    Tensor out(shape);
    const int64_t na = va.size();
    for (int64_t i = 0; i < na; ++i) out[i] = va[i];
    for (int64_t i = 0; i < vb.size(); ++i) out[na + i] = vb[i];
    Var r = make(std::move(out), {a, b}, nullptr);
    if (needs(r)) {
        node(r).back = [a, b, r, na](Graph& g) {
            const Tensor& go = g.gref(r);
            if (g.needs(a)) {
                Tensor& ga = g.gref(a);
                for (int64_t i = 0; i < na; ++i) ga[i] += go[i];
            }
            if (g.needs(b)) {
                Tensor& gb = g.gref(b);
                for (int64_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
            }
        };
    }
    return r;
}

Graph::Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad, int dilation) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.rank() != 3 || vw.rank() != 4 || vb.rank() != 1) throw ShapeError("conv2d: bad ranks");
    if (vx.dim(0) != vw.dim(1)) throw ShapeError("conv2d: channel mismatch");
    if (vw.dim(0) != vb.dim(0)) throw ShapeError("conv2d: bias mismatch");
    const int H = vx.dim(1), W = vx.dim(2);
    const int kh = vw.dim(2), kw = vw.dim(3);
    const int Ho = (H + 2 * pad - dilation * (kh - 1) - 1) / stride + 1;
    const int Wo = (W + 2 * pad - dilation * (kw - 1) - 1) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: empty output");
    Tensor out({vw.dim(0), Ho, Wo});
    conv2d_fwd(vx, vw, vb, out, stride, pad, dilation);
    Var r = make(std::move(out), {x, w, b}, nullptr);
    if (needs(r)) {
        node(r).back = [x, w, b, r, stride, pad, dilation](Graph& g) {
            conv2d_bwd(g.val(x), g.val(w), g.gref(r), g.needs(x) ? &g.gref(x) : nullptr,
                       g.needs(w) ? &g.gref(w) : nullptr, g.needs(b) ? &g.gref(b) : nullptr, stride, pad, dilation);
        };
    }
    return r;
}

Graph::Var Graph::conv3d(Var x, Var w, Var b, int pad) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.rank() != 4 || vw.rank() != 5 || vb.rank() != 1) throw ShapeError("conv3d: bad ranks");
    if (vx.dim(0) != vw.dim(1)) throw ShapeError("conv3d: channel mismatch");
    const int D = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int kd = vw.dim(2);
    if (D + 2 * pad < kd) throw ShapeError("conv3d: depth smaller than kernel");
    if (kd != vw.dim(3) || kd != vw.dim(4) || D + 2 * pad - kd + 1 != D)
        throw ShapeError("conv3d: only same-size cubic kernels supported");
    Tensor out({vw.dim(0), D, H, W});
    conv3d_fwd(vx, vw, vb, out, pad);
    Var r = make(std::move(out), {x, w, b}, nullptr);
    if (needs(r)) {
        node(r).back = [x, w, b, r, pad](Graph& g) {
            conv3d_bwd(g.val(x), g.val(w), g.gref(r), g.needs(x) ? &g.gref(x) : nullptr,
                       g.needs(w) ? &g.gref(w) : nullptr, g.needs(b) ? &g.gref(b) : nullptr, pad);
        };
    }
    return r;
}

Graph::Var Graph::upsample_bilinear(Var x, int out_h, int out_w) {
    const Tensor& vx = val(x);
    if (vx.rank() != 2 && vx.rank() != 3) throw ShapeError("upsample: rank must be 2 or 3");
    const int H = vx.dim(vx.rank() - 2), W = vx.dim(vx.rank() - 1);
    const int64_t L = lead_count(vx);
    auto ay = std::make_shared<ResampleIdx>(bilinear_axis(H, out_h));
    auto ax = std::make_shared<ResampleIdx>(bilinear_axis(W, out_w));
    std::vector<int> shape = vx.shape();
    shape[static_cast<size_t>(vx.rank() - 2)] = out_h;
    shape[static_cast<size_t>(vx.rank() - 1)] = out_w;
    Tensor out(shape);
    for (int64_t l = 0; l < L; ++l) {
        const double* src = vx.data() + l * H * W;
        double* dst = out.data() + static_cast<int64_t>(l) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ay->i0[static_cast<size_t>(oy)];
            const double fy = ay->frac[static_cast<size_t>(oy)];
            const int y1 = std::min(y0 + 1, H - 1);
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = ax->i0[static_cast<size_t>(ox)];
                const double fx = ax->frac[static_cast<size_t>(ox)];
                const int x1 = std::min(x0 + 1, W - 1);
                // incremental form keeps constant inputs bit-exact
                const double top = src[static_cast<int64_t>(y0) * W + x0] +
                                   fx * (src[static_cast<int64_t>(y0) * W + x1] -
                                         src[static_cast<int64_t>(y0) * W + x0]);
                const double bot = src[static_cast<int64_t>(y1) * W + x0] +
                                   fx * (src[static_cast<int64_t>(y1) * W + x1] -
                                         src[static_cast<int64_t>(y1) * W + x0]);
                dst[static_cast<int64_t>(oy) * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    Var r = make(std::move(out), {x}, nullptr);
    if (needs(r)) {
        node(r).back = [x, r, ay, ax, L, H, W, out_h, out_w](Graph& g) {
            const Tensor& go = g.gref(r);
            Tensor& gx = g.gref(x);
            for (int64_t l = 0; l < L; ++l) {
                double* gsrc = gx.data() + l * H * W;
                const double* gdst = go.data() + static_cast<int64_t>(l) * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int y0 = ay->i0[static_cast<size_t>(oy)];
                    const double fy = ay->frac[static_cast<size_t>(oy)];
                    const int y1 = std::min(y0 + 1, H - 1);
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int x0 = ax->i0[static_cast<size_t>(ox)];
                        const double fx = ax->frac[static_cast<size_t>(ox)];
                        const int x1 = std::min(x0 + 1, W - 1);
                        const double gv = gdst[static_cast<int64_t>(oy) * out_w + ox];
                        gsrc[static_cast<int64_t>(y0) * W + x0] += (1 - fy) * (1 - fx) * gv;
                        gsrc[static_cast<int64_t>(y0) * W + x1] += (1 - fy) * fx * gv;
                        gsrc[static_cast<int64_t>(y1) * W + x0] += fy * (1 - fx) * gv;
                        gsrc[static_cast<int64_t>(y1) * W + x1] += fy * fx * gv;
                    }
                }
            }
        };
    }
    return r;
}

Graph::Var Graph::downsample_area(Var x, int factor) {
    const Tensor& vx = val(x);
    if (vx.rank() != 2 && vx.rank() != 3) throw ShapeError("downsample: rank must be 2 or 3");
    const int H = vx.dim(vx.rank() - 2), W = vx.dim(vx.rank() - 1);
    if (factor < 1 || H % factor != 0 || W % factor != 0) throw ShapeError("downsample: size not divisible by factor");
    const int Ho = H / factor, Wo = W / factor;
    const int64_t L = lead_count(vx);
    std::vector<int> shape = vx.shape();
    shape[static_cast<size_t>(vx.rank() - 2)] = Ho;
    shape[static_cast<size_t>(vx.rank() - 1)] = Wo;
    Tensor out(shape);
    const double inv = 1.0 / (factor * factor);
    for (int64_t l = 0; l < L; ++l) {
        const double* src = vx.data() + l * H * W;
        double* dst = out.data() + static_cast<int64_t>(l) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += src[static_cast<int64_t>(oy * factor + dy) * W + ox * factor + dx];
                dst[static_cast<int64_t>(oy) * Wo + ox] = acc * inv;
            }
    }
    Var r = make(std::move(out), {x}, nullptr);
    if (needs(r)) {
        node(r).back = [x, r, L, H, W, Ho, Wo, factor, inv](Graph& g) {
            const Tensor& go = g.gref(r);
            Tensor& gx = g.gref(x);
            for (int64_t l = 0; l < L; ++l) {
                double* gsrc = gx.data() + l * H * W;
                const double* gdst = go.data() + static_cast<int64_t>(l) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        const double gv = gdst[static_cast<int64_t>(oy) * Wo + ox] * inv;
                        for (int dy = 0; dy < factor; ++dy)
                            for (int dx = 0; dx < factor; ++dx)
                                gsrc[static_cast<int64_t>(oy * factor + dy) * W + ox * factor + dx] += gv;
                    }
            }
        };
    }
    return r;
}

Graph::Var Graph::warp_horizontal(Var feat, Var disp) {
    const Tensor& vf = val(feat);
    const Tensor& vd = val(disp);
    if (vf.rank() != 3 || vd.rank() != 2) throw ShapeError("warp: feat must be [C,H,W], disp [H,W]");
    if (vf.dim(1) != vd.dim(0) || vf.dim(2) != vd.dim(1)) throw ShapeError("warp: spatial shape mismatch");
    Tensor out(vf.shape());
    warp_fwd(vf, vd.data(), 0.0, out);
    Var r = make(std::move(out), {feat, disp}, nullptr);
    if (needs(r)) {
        node(r).back = [feat, disp, r](Graph& g) {
            warp_bwd(g.val(feat), g.val(disp).data(), 0.0, g.gref(r), g.needs(feat) ? &g.gref(feat) : nullptr,
                     g.needs(disp) ? g.gref(disp).data() : nullptr);
        };
    }
    return r;
}

Graph::Var Graph::residual_cost_volume(Var left, Var right, Var disp, int range_r) {
    if (range_r < 1) throw ConfigError("residual cost volume: R must be >= 1");
    const Tensor& vl = val(left);
    const Tensor& vr = val(right);
    const Tensor& vd = val(disp);
    if (vl.rank() != 3 || !vl.same_shape(vr)) throw ShapeError("cost volume: feature shape mismatch");
    if (vd.rank() != 2 || vd.dim(0) != vl.dim(1) || vd.dim(1) != vl.dim(2))
        throw ShapeError("cost volume: disparity shape mismatch");
    const int C = vl.dim(0), H = vl.dim(1), W = vl.dim(2);
    const int D = 2 * range_r + 1;
    Tensor out({2 * C, D, H, W});
    const int64_t plane = static_cast<int64_t>(H) * W;
    // left half: the reference features replicated over offsets
    for (int c = 0; c < C; ++c)
        for (int ri = 0; ri < D; ++ri) {
            double* dst = out.data() + (static_cast<int64_t>(c) * D + ri) * plane;
            const double* src = vl.data() + c * plane;
            std::copy(src, src + plane, dst);
        }
    // right half: warped by disp + r per offset slice
    Tensor slice({C, H, W});
    for (int ri = 0; ri < D; ++ri) {
        warp_fwd(vr, vd.data(), static_cast<double>(ri - range_r), slice);
        for (int c = 0; c < C; ++c) {
            double* dst = out.data() + ((static_cast<int64_t>(C + c)) * D + ri) * plane;
            const double* src = slice.data() + c * plane;
            std::copy(src, src + plane, dst);
        }
    }
    Var r = make(std::move(out), {left, right, disp}, nullptr);
    if (needs(r)) {
        node(r).back = [left, right, disp, r, C, D, H, W, range_r](Graph& g) {
            const Tensor& go = g.gref(r);
            const int64_t plane = static_cast<int64_t>(H) * W;
            if (g.needs(left)) {
                Tensor& gl = g.gref(left);
                for (int c = 0; c < C; ++c) {
                    double* dst = gl.data() + c * plane;
                    for (int ri = 0; ri < D; ++ri) {
                        const double* src = go.data() + (static_cast<int64_t>(c) * D + ri) * plane;
                        for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                    }
                }
            }
            if (g.needs(right) || g.needs(disp)) {
                Tensor gslice({C, H, W});
                for (int ri = 0; ri < D; ++ri) {
                    for (int c = 0; c < C; ++c) {
                        const double* src = go.data() + ((static_cast<int64_t>(C + c)) * D + ri) * plane;
                        std::copy(src, src + plane, gslice.data() + c * plane);
                    }
                    warp_bwd(g.val(right), g.val(disp).data(), static_cast<double>(ri - range_r), gslice,
                             g.needs(right) ? &g.gref(right) : nullptr,
                             g.needs(disp) ? g.gref(disp).data() : nullptr);
                }
            }
        };
    }
    return r;
}

Graph::Var Graph::soft_argmin(Var scores, int range_r) {
    const Tensor& vs = val(scores);
    if (vs.rank() != 3) throw ShapeError("soft_argmin: scores must be [D,H,W]");
    const int D = vs.dim(0), H = vs.dim(1), W = vs.dim(2);
    if (D != 2 * range_r + 1) throw ShapeError("soft_argmin: offset axis length must be 2R+1");
    if (!vs.all_finite()) throw NumericError("soft_argmin: non-finite scores");
    const int64_t plane = static_cast<int64_t>(H) * W;
    auto probs = std::make_shared<Tensor>(vs.shape());
    Tensor out({H, W});
    for (int64_t i = 0; i < plane; ++i) {
        double zmax = -vs[i];
        for (int d = 1; d < D; ++d) zmax = std::max(zmax, -vs[d * plane + i]);
        double denom = 0.0;
        for (int d = 0; d < D; ++d) {
            const double e = std::exp(-vs[d * plane + i] - zmax);
            (*probs)[d * plane + i] = e;
            denom += e;
        }
        for (int d = 0; d < D; ++d) (*probs)[d * plane + i] /= denom;
        // pairwise form: exactly zero for symmetric (e.g. uniform) scores
        double eps = 0.0;
        for (int k = 1; k <= range_r; ++k)
            eps += k * ((*probs)[(range_r + k) * plane + i] - (*probs)[(range_r - k) * plane + i]);
        out[i] = eps;
    }
    Var r = make(std::move(out), {scores}, nullptr);
    if (needs(r)) {
        node(r).back = [scores, r, probs, D, plane, range_r](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& eps = g.val(r);
            Tensor& gs = g.gref(scores);
            for (int64_t i = 0; i < plane; ++i) {
                const double gv = go[i];
                if (gv == 0.0) continue;
                for (int d = 0; d < D; ++d) {
                    const double p = (*probs)[d * plane + i];
                    gs[d * plane + i] += -gv * p * ((d - range_r) - eps[i]);
                }
            }
        };
    }
    return r;
}

Graph::Var Graph::sobel_magnitude(Var x) {
    const Tensor& vx = val(x);
    if (vx.rank() != 2) throw ShapeError("sobel: input must be [H,W]");
    const int H = vx.dim(0), W = vx.dim(1);
    static const double KX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    auto gxv = std::make_shared<Tensor>(std::vector<int>{H, W});
    auto gyv = std::make_shared<Tensor>(std::vector<int>{H, W});
    Tensor out({H, W});
    const double eps = 1e-12;
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int y = 0; y < H; ++y)
        for (int x2 = 0; x2 < W; ++x2) {
            double ax = 0.0, ayv = 0.0;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double v = vx.at2(clampi(y + ky - 1, 0, H - 1), clampi(x2 + kx - 1, 0, W - 1));
                    ax += KX[ky][kx] * v;
                    ayv += KX[kx][ky] * v;
                }
            gxv->at2(y, x2) = ax;
            gyv->at2(y, x2) = ayv;
            out.at2(y, x2) = std::sqrt(ax * ax + ayv * ayv + eps);
        }
    Var r = make(std::move(out), {x}, nullptr);
    if (needs(r)) {
        node(r).back = [x, r, gxv, gyv, H, W, clampi](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& m = g.val(r);
            Tensor& gx = g.gref(x);
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < W; ++x2) {
                    const double gm = go.at2(y, x2) / m.at2(y, x2);
                    const double dgx = gxv->at2(y, x2) * gm;
                    const double dgy = gyv->at2(y, x2) * gm;
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            gx.at2(clampi(y + ky - 1, 0, H - 1), clampi(x2 + kx - 1, 0, W - 1)) +=
                                KX[ky][kx] * dgx + KX[kx][ky] * dgy;
                        }
                }
        };
    }
    return r;
}

Graph::Var Graph::mul_hw(Var x, Var map) {
    const Tensor& vx = val(x);
    const Tensor& vm = val(map);
    if (vm.rank() != 2) throw ShapeError("mul_hw: map must be [H,W]");
    if (vx.rank() < 2 || vx.dim(vx.rank() - 2) != vm.dim(0) || vx.dim(vx.rank() - 1) != vm.dim(1))
        throw ShapeError("mul_hw: spatial shape mismatch");
    const int64_t L = lead_count(vx);
    const int64_t plane = vm.size();
    Tensor out(vx.shape());
    for (int64_t l = 0; l < L; ++l)
        for (int64_t i = 0; i < plane; ++i) out[l * plane + i] = vx[l * plane + i] * vm[i];
    Var r = make(std::move(out), {x, map}, nullptr);
    if (needs(r)) {
        node(r).back = [x, map, r, L, plane](Graph& g) {
            const Tensor& go = g.gref(r);
            const Tensor& vx = g.val(x);
            const Tensor& vm = g.val(map);
            if (g.needs(x)) {
                Tensor& gx = g.gref(x);
                for (int64_t l = 0; l < L; ++l)
                    for (int64_t i = 0; i < plane; ++i) gx[l * plane + i] += go[l * plane + i] * vm[i];
            }
            if (g.needs(map)) {
                Tensor& gm = g.gref(map);
                for (int64_t l = 0; l < L; ++l)
                    for (int64_t i = 0; i < plane; ++i) gm[i] += go[l * plane + i] * vx[l * plane + i];
            }
        };
    }
    return r;
}

Graph::Var Graph::sum(Var a) {
    const Tensor& va = val(a);
    double acc = 0.0;
    for (int64_t i = 0; i < va.size(); ++i) acc += va[i];
    Var r = make(Tensor::scalar(acc), {a}, nullptr);
    if (needs(r)) {
        node(r).back = [a, r](Graph& g) {
            const double go = g.gref(r)[0];
            Tensor& ga = g.gref(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += go;
        };
    }
    return r;
}

Graph::Var Graph::smooth_l1_masked_mean(Var pred, const Tensor& target, const Tensor& mask) {
    const Tensor& vp = val(pred);
    if (!vp.same_shape(target) || !vp.same_shape(mask)) throw ShapeError("smooth_l1: shape mismatch");
    int64_t count = 0;
    double acc = 0.0;
    for (int64_t i = 0; i < vp.size(); ++i) {
        if (mask[i] <= 0.0) continue;
        ++count;
        const double e = vp[i] - target[i];
        const double a = std::fabs(e);
        acc += (a < 1.0) ? 0.5 * e * e : a - 0.5;
    }
    Tensor out = Tensor::scalar(count > 0 ? acc / static_cast<double>(count) : 0.0);
    auto tgt = std::make_shared<Tensor>(target);
    auto msk = std::make_shared<Tensor>(mask);
    Var r = make(std::move(out), {pred}, nullptr);
    if (needs(r) && count > 0) {
        node(r).back = [pred, r, tgt, msk, count](Graph& g) {
            const double go = g.gref(r)[0] / static_cast<double>(count);
            const Tensor& vp = g.val(pred);
            Tensor& gp = g.gref(pred);
            for (int64_t i = 0; i < vp.size(); ++i) {
                if ((*msk)[i] <= 0.0) continue;
                const double e = vp[i] - (*tgt)[i];
                gp[i] += go * ((std::fabs(e) < 1.0) ? e : (e > 0 ? 1.0 : -1.0));
            }
        };
    } else if (needs(r)) {
        node(r).back = nullptr;
    }
    return r;
}

}  // namespace recsm

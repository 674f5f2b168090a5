#include "ispl/autodiff.hpp"

#include <cmath>
#include <unordered_set>

namespace ispl::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var detach(const Var& x) {
    auto n = std::make_shared<Node>();
    n->value = x->value;
    n->requires_grad = false;
    return n;
}

Var add(const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] += b->value[i];
    auto node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [a, b](Node& self) {
            const int64_t n = self.value.numel();
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i];
            }
        };
    }
    return node;
}

Var sub(const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] -= b->value[i];
    auto node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [a, b](Node& self) {
            const int64_t n = self.value.numel();
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i) b->grad[i] -= self.grad[i];
            }
        };
    }
    return node;
}

Var mul(const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] *= b->value[i];
    auto node = make_node(std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [a, b](Node& self) {
            const int64_t n = self.value.numel();
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->value[i];
            }
        };
    }
    return node;
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] *= s;
    auto node = make_node(std::move(out), {a});
    if (node->requires_grad) {
        node->backward_fn = [a, s](Node& self) {
            a->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * s;
        };
    }
    return node;
}

Var add_const(const Var& a, double c) {
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] += c;
    auto node = make_node(std::move(out), {a});
    if (node->requires_grad) {
        node->backward_fn = [a](Node& self) {
            a->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
        };
    }
    return node;
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i)
        if (out[i] < 0.0) out[i] *= slope;
    auto node = make_node(std::move(out), {x});
    if (node->requires_grad) {
        node->backward_fn = [x, slope](Node& self) {
            x->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i)
                x->grad[i] += self.grad[i] * (x->value[i] > 0.0 ? 1.0 : slope);
        };
    }
    return node;
}

Var tanh_op(const Var& x) {
    Tensor out = x->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(out[i]);
    auto node = make_node(std::move(out), {x});
    if (node->requires_grad) {
        node->backward_fn = [x](Node& self) {
            x->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i) {
                const double y = self.value[i];
                x->grad[i] += self.grad[i] * (1.0 - y * y);
            }
        };
    }
    return node;
}

Var sigmoid(const Var& x) {
    Tensor out = x->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    auto node = make_node(std::move(out), {x});
    if (node->requires_grad) {
        node->backward_fn = [x](Node& self) {
            x->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i) {
                const double y = self.value[i];
                x->grad[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    }
    return node;
}

Var conv2d(const Var& x, const Var& w, int stride, int pad, Pad mode) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    check(xs.size() == 4 && ws.size() == 4, "conv2d: expects rank-4 input and weight");
    check(xs[1] == ws[1], "conv2d: channel mismatch between input " + Tensor::shape_str(xs) +
                              " and weight " + Tensor::shape_str(ws));
    check(stride >= 1, "conv2d: stride must be >= 1");
    const int64_t N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const int64_t Co = ws[0], Kh = ws[2], Kw = ws[3];
    const int64_t OH = (H + 2 * pad - Kh) / stride + 1;
    const int64_t OW = (W + 2 * pad - Kw) / stride + 1;
    check(OH >= 1 && OW >= 1, "conv2d: output would be empty");

    Tensor out({N, Co, OH, OW});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    double* od = out.data();
    const bool reflect = (mode == Pad::Reflect);

    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        const double* xrow = xd + ((n * Ci + ci) * H) * W;
                        const double* wrow = wd + ((co * Ci + ci) * Kh) * Kw;
                        for (int64_t kh = 0; kh < Kh; ++kh) {
                            int64_t ih = oh * stride + kh - pad;
                            if (reflect) {
                                ih = reflect_index(ih, H);
                            } else if (ih < 0 || ih >= H) {
                                continue;
                            }
                            for (int64_t kw = 0; kw < Kw; ++kw) {
                                int64_t iw = ow * stride + kw - pad;
                                if (reflect) {
                                    iw = reflect_index(iw, W);
                                } else if (iw < 0 || iw >= W) {
                                    continue;
                                }
                                acc += xrow[ih * W + iw] * wrow[kh * Kw + kw];
                            }
                        }
                    }
                    od[((n * Co + co) * OH + oh) * OW + ow] = acc;
                }

    auto node = make_node(std::move(out), {x, w});
    if (node->requires_grad) {
        node->backward_fn = [x, w, stride, pad, reflect, N, Ci, H, W, Co, Kh, Kw, OH,
                             OW](Node& self) {
            const double* xd = x->value.data();
            const double* wd = w->value.data();
            const double* gd = self.grad.data();
            const bool need_x = x->requires_grad;
            const bool need_w = w->requires_grad;
            if (need_x) x->ensure_grad();
            if (need_w) w->ensure_grad();
            double* gx = need_x ? x->grad.data() : nullptr;
            double* gw = need_w ? w->grad.data() : nullptr;

            for (int64_t n = 0; n < N; ++n)
                for (int64_t co = 0; co < Co; ++co)
                    for (int64_t oh = 0; oh < OH; ++oh)
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            const double g = gd[((n * Co + co) * OH + oh) * OW + ow];
                            if (g == 0.0) continue;
                            for (int64_t ci = 0; ci < Ci; ++ci) {
                                const int64_t xbase = ((n * Ci + ci) * H) * W;
                                const int64_t wbase = ((co * Ci + ci) * Kh) * Kw;
                                for (int64_t kh = 0; kh < Kh; ++kh) {
                                    int64_t ih = oh * stride + kh - pad;
                                    if (reflect) {
                                        ih = reflect_index(ih, H);
                                    } else if (ih < 0 || ih >= H) {
                                        continue;
                                    }
                                    for (int64_t kw = 0; kw < Kw; ++kw) {
                                        int64_t iw = ow * stride + kw - pad;
                                        if (reflect) {
                                            iw = reflect_index(iw, W);
                                        } else if (iw < 0 || iw >= W) {
                                            continue;
                                        }
                                        if (need_x)
                                            gx[xbase + ih * W + iw] += g * wd[wbase + kh * Kw + kw];
                                        if (need_w)
                                            gw[wbase + kh * Kw + kw] += g * xd[xbase + ih * W + iw];
                                    }
                                }
                            }
                        }
        };
    }
    return node;
}

Var add_bias(const Var& x, const Var& b) {
    const auto& xs = x->value.shape();
    check(xs.size() == 4, "add_bias: expects rank-4 input");
    check(b->value.rank() == 1 && b->value.dim(0) == xs[1],
          "add_bias: bias length must equal channel count");
    const int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    Tensor out = x->value;
    double* od = out.data();
    const double* bd = b->value.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double bv = bd[c];
            double* row = od + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) row[i] += bv;
        }
    auto node = make_node(std::move(out), {x, b});
    if (node->requires_grad) {
        node->backward_fn = [x, b, N, C, HW](Node& self) {
            const double* gd = self.grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                const int64_t n = self.value.numel();
                for (int64_t i = 0; i < n; ++i) x->grad[i] += gd[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c) {
                        const double* row = gd + (n * C + c) * HW;
                        double acc = 0.0;
                        for (int64_t i = 0; i < HW; ++i) acc += row[i];
                        b->grad[c] += acc;
                    }
            }
        };
    }
    return node;
}

Var pac_conv(const Var& features, const Var& w, const Var& embeddings, double* phi_min,
             double* phi_max) {
    const auto& ys = features->value.shape();
    const auto& ws = w->value.shape();
    const auto& es = embeddings->value.shape();
    check(ys.size() == 4 && ws.size() == 4 && es.size() == 4,
          "pac_conv: expects rank-4 features, weights, embeddings");
    check(ws[2] == ws[3] && ws[2] % 2 == 1, "pac_conv: kernel must be odd-sized square");
    check(ys[1] == ws[1], "pac_conv: feature/weight channel mismatch");
    check(es[0] == ys[0] && es[2] == ys[2] && es[3] == ys[3],
          "pac_conv: embeddings must align spatially with features");
    const int64_t N = ys[0], Ci = ys[1], H = ys[2], W = ys[3];
    const int64_t Co = ws[0], K = ws[2];
    const int64_t D = es[1];
    const int64_t r = K / 2;
    const int64_t KK = K * K;

    Tensor out({N, Co, H, W});
    // Correlation phi = tanh(<e_p, e_q>) cached for backward, laid out (N, K*K, H, W).
    auto phi = std::make_shared<Tensor>(Tensor({N, KK, H, W}));
    const double* yd = features->value.data();
    const double* wd = w->value.data();
    const double* ed = embeddings->value.data();
    double* od = out.data();
    double* pd = phi->data();
    double pmin = 1.0, pmax = -1.0;

    for (int64_t n = 0; n < N; ++n) {
        const double* en = ed + n * D * H * W;
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                const int64_t p = i * W + j;
                for (int64_t a = 0; a < K; ++a) {
                    const int64_t qi = reflect_index(i + a - r, H);
                    for (int64_t b = 0; b < K; ++b) {
                        const int64_t qj = reflect_index(j + b - r, W);
                        const int64_t q = qi * W + qj;
                        double s = 0.0;
                        for (int64_t d = 0; d < D; ++d)
                            s += en[d * H * W + p] * en[d * H * W + q];
                        const double ph = std::tanh(s);
                        pd[((n * KK + a * K + b) * H) * W + p] = ph;
                        if (ph < pmin) pmin = ph;
                        if (ph > pmax) pmax = ph;
                        for (int64_t co = 0; co < Co; ++co) {
                            double acc = 0.0;
                            for (int64_t ci = 0; ci < Ci; ++ci)
                                acc += wd[((co * Ci + ci) * K + a) * K + b] *
                                       yd[((n * Ci + ci) * H) * W + q];
                            od[((n * Co + co) * H) * W + p] += ph * acc;
                        }
                    }
                }
            }
    }
    if (phi_min) *phi_min = pmin;
    if (phi_max) *phi_max = pmax;

    auto node = make_node(std::move(out), {features, w, embeddings});
    if (node->requires_grad) {
        node->backward_fn = [features, w, embeddings, phi, N, Ci, H, W, Co, K, D, r,
                             KK](Node& self) {
            const double* yd = features->value.data();
            const double* wd = w->value.data();
            const double* ed = embeddings->value.data();
            const double* pd = phi->data();
            const double* gd = self.grad.data();
            const bool need_y = features->requires_grad;
            const bool need_w = w->requires_grad;
            const bool need_e = embeddings->requires_grad;
            if (need_y) features->ensure_grad();
            if (need_w) w->ensure_grad();
            if (need_e) embeddings->ensure_grad();
            double* gy = need_y ? features->grad.data() : nullptr;
            double* gw = need_w ? w->grad.data() : nullptr;
            double* ge = need_e ? embeddings->grad.data() : nullptr;

            for (int64_t n = 0; n < N; ++n) {
                const double* en = ed + n * D * H * W;
                double* gen = need_e ? ge + n * D * H * W : nullptr;
                for (int64_t i = 0; i < H; ++i)
                    for (int64_t j = 0; j < W; ++j) {
                        const int64_t p = i * W + j;
                        for (int64_t a = 0; a < K; ++a) {
                            const int64_t qi = reflect_index(i + a - r, H);
                            for (int64_t b = 0; b < K; ++b) {
                                const int64_t qj = reflect_index(j + b - r, W);
                                const int64_t q = qi * W + qj;
                                const double ph = pd[((n * KK + a * K + b) * H) * W + p];
                                // ds accumulates d(loss)/d(s_pq) through every
                                // output channel that used this neighbor.
                                double ds = 0.0;
                                for (int64_t co = 0; co < Co; ++co) {
                                    const double g = gd[((n * Co + co) * H) * W + p];
                                    if (g == 0.0) continue;
                                    double wy = 0.0;
                                    for (int64_t ci = 0; ci < Ci; ++ci) {
                                        const double wv = wd[((co * Ci + ci) * K + a) * K + b];
                                        const double yv = yd[((n * Ci + ci) * H) * W + q];
                                        wy += wv * yv;
                                        if (need_y) gy[((n * Ci + ci) * H) * W + q] += g * ph * wv;
                                        if (need_w)
                                            gw[((co * Ci + ci) * K + a) * K + b] += g * ph * yv;
                                    }
                                    ds += g * wy;
                                }
                                if (need_e && ds != 0.0) {
                                    ds *= (1.0 - ph * ph);
                                    for (int64_t d = 0; d < D; ++d) {
                                        const int64_t dp = d * H * W + p;
                                        const int64_t dq = d * H * W + q;
                                        gen[dp] += ds * en[dq];
                                        gen[dq] += ds * en[dp];
                                    }
                                }
                            }
                        }
                    }
            }
        };
    }
    return node;
}

namespace {

struct ResampleAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> t;  // weight of i1
};

ResampleAxis make_axis(int64_t in, int64_t out) {
    ResampleAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.t.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        const double src = (o + 0.5) * ratio - 0.5;
        double fl = std::floor(src);
        double t = src - fl;
        int64_t i0 = static_cast<int64_t>(fl);
        int64_t i1 = i0 + 1;
        if (i0 < 0) {
            i0 = 0;
            i1 = 0;
            t = 0.0;
        } else if (i1 > in - 1) {
            i0 = in - 1;
            i1 = in - 1;
            t = 0.0;
        }
        ax.i0[o] = i0;
        ax.i1[o] = i1;
        ax.t[o] = t;
    }
    return ax;
}

}  // namespace

Var bilinear_resize(const Var& x, int64_t out_h, int64_t out_w) {
    const auto& xs = x->value.shape();
    check(xs.size() == 4, "bilinear_resize: expects rank-4 input");
    check(out_h >= 1 && out_w >= 1, "bilinear_resize: output size must be positive");
    const int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    auto ay = std::make_shared<ResampleAxis>(make_axis(H, out_h));
    auto axx = std::make_shared<ResampleAxis>(make_axis(W, out_w));

    Tensor out({N, C, out_h, out_w});
    const double* xd = x->value.data();
    double* od = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const double* plane = xd + (n * C + c) * H * W;
            double* oplane = od + (n * C + c) * out_h * out_w;
            for (int64_t oh = 0; oh < out_h; ++oh) {
                const int64_t y0 = ay->i0[oh], y1 = ay->i1[oh];
                const double ty = ay->t[oh];
                for (int64_t ow = 0; ow < out_w; ++ow) {
                    const int64_t x0 = axx->i0[ow], x1 = axx->i1[ow];
                    const double tx = axx->t[ow];
                    const double v00 = plane[y0 * W + x0];
                    const double v01 = plane[y0 * W + x1];
                    const double v10 = plane[y1 * W + x0];
                    const double v11 = plane[y1 * W + x1];
                    oplane[oh * out_w + ow] = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                              ty * ((1 - tx) * v10 + tx * v11);
                }
            }
        }

    auto node = make_node(std::move(out), {x});
    if (node->requires_grad) {
        node->backward_fn = [x, ay, axx, N, C, H, W, out_h, out_w](Node& self) {
            x->ensure_grad();
            const double* gd = self.grad.data();
            double* gx = x->grad.data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    double* gplane = gx + (n * C + c) * H * W;
                    const double* goplane = gd + (n * C + c) * out_h * out_w;
                    for (int64_t oh = 0; oh < out_h; ++oh) {
                        const int64_t y0 = ay->i0[oh], y1 = ay->i1[oh];
                        const double ty = ay->t[oh];
                        for (int64_t ow = 0; ow < out_w; ++ow) {
                            const int64_t x0 = axx->i0[ow], x1 = axx->i1[ow];
                            const double tx = axx->t[ow];
                            const double g = goplane[oh * out_w + ow];
                            gplane[y0 * W + x0] += g * (1 - ty) * (1 - tx);
                            gplane[y0 * W + x1] += g * (1 - ty) * tx;
                            gplane[y1 * W + x0] += g * ty * (1 - tx);
                            gplane[y1 * W + x1] += g * ty * tx;
                        }
                    }
                }
        };
    }
    return node;
}

Var instance_norm(const Var& x, double eps) {
    const auto& xs = x->value.shape();
    check(xs.size() == 4, "instance_norm: expects rank-4 input");
    check(eps > 0.0, "instance_norm: eps must be positive");
    const int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    check(HW > 0, "instance_norm: empty spatial extent");

    Tensor out(xs);
    auto stds = std::make_shared<std::vector<double>>(static_cast<size_t>(N * C));
    auto floored = std::make_shared<std::vector<char>>(static_cast<size_t>(N * C));
    const double* xd = x->value.data();
    double* od = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* plane = xd + nc * HW;
        double mean = 0.0;
        for (int64_t i = 0; i < HW; ++i) mean += plane[i];
        mean /= static_cast<double>(HW);
        double var = 0.0;
        for (int64_t i = 0; i < HW; ++i) {
            const double d = plane[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(HW);
        double sd = std::sqrt(var);
        const bool fl = sd < eps;
        if (fl) sd = eps;
        (*stds)[nc] = sd;
        (*floored)[nc] = fl ? 1 : 0;
        double* oplane = od + nc * HW;
        for (int64_t i = 0; i < HW; ++i) oplane[i] = (plane[i] - mean) / sd;
    }

    auto node = make_node(std::move(out), {x});
    if (node->requires_grad) {
        node->backward_fn = [x, stds, floored, N, C, HW](Node& self) {
            x->ensure_grad();
            const double* yd = self.value.data();
            const double* gd = self.grad.data();
            double* gx = x->grad.data();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                const double* y = yd + nc * HW;
                const double* g = gd + nc * HW;
                double* gxp = gx + nc * HW;
                const double sd = (*stds)[nc];
                double gmean = 0.0, gymean = 0.0;
                for (int64_t i = 0; i < HW; ++i) {
                    gmean += g[i];
                    gymean += g[i] * y[i];
                }
                gmean /= static_cast<double>(HW);
                gymean /= static_cast<double>(HW);
                if ((*floored)[nc]) {
                    // std clamped to eps: no gradient through the scale.
                    for (int64_t i = 0; i < HW; ++i) gxp[i] += (g[i] - gmean) / sd;
                } else {
                    for (int64_t i = 0; i < HW; ++i)
                        gxp[i] += (g[i] - gmean - y[i] * gymean) / sd;
                }
            }
        };
    }
    return node;
}

Var concat_channels(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_channels: empty input list");
    const auto& s0 = xs[0]->value.shape();
    check(s0.size() == 4, "concat_channels: expects rank-4 inputs");
    int64_t ctotal = 0;
    for (const auto& x : xs) {
        const auto& s = x->value.shape();
        check(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
              "concat_channels: inputs must share N,H,W");
        ctotal += s[1];
    }
    const int64_t N = s0[0], H = s0[2], W = s0[3], HW = H * W;
    Tensor out({N, ctotal, H, W});
    double* od = out.data();
    for (int64_t n = 0; n < N; ++n) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int64_t c = x->value.dim(1);
            const double* src = x->value.data() + n * c * HW;
            std::copy(src, src + c * HW, od + (n * ctotal + coff) * HW);
            coff += c;
        }
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    auto node = make_node(std::move(out), parents);
    if (node->requires_grad) {
        node->backward_fn = [xs, N, ctotal, HW](Node& self) {
            const double* gd = self.grad.data();
            for (int64_t n = 0; n < N; ++n) {
                int64_t coff = 0;
                for (const auto& x : xs) {
                    const int64_t c = x->value.dim(1);
                    if (x->requires_grad) {
                        x->ensure_grad();
                        double* dst = x->grad.data() + n * c * HW;
                        const double* src = gd + (n * ctotal + coff) * HW;
                        for (int64_t i = 0; i < c * HW; ++i) dst[i] += src[i];
                    }
                    coff += c;
                }
            }
        };
    }
    return node;
}

Var weighted_sum(const std::vector<Var>& xs, const Var& weight_matrix, int64_t row) {
    check(!xs.empty(), "weighted_sum: empty input list");
    const auto& ws = weight_matrix->value.shape();
    check(ws.size() == 2, "weighted_sum: weight matrix must be rank-2");
    check(row >= 0 && row < ws[0], "weighted_sum: row out of range");
    check(static_cast<int64_t>(xs.size()) == ws[1],
          "weighted_sum: input count must equal weight columns");
    for (const auto& x : xs)
        check(x->value.same_shape(xs[0]->value), "weighted_sum: inputs must share shape");

    const int64_t n = xs[0]->value.numel();
    const int64_t cols = ws[1];
    Tensor out(xs[0]->value.shape());
    double* od = out.data();
    for (int64_t j = 0; j < cols; ++j) {
        const double wv = weight_matrix->value[row * cols + j];
        const double* xd = xs[j]->value.data();
        for (int64_t i = 0; i < n; ++i) od[i] += wv * xd[i];
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    parents.push_back(weight_matrix);
    auto node = make_node(std::move(out), parents);
    if (node->requires_grad) {
        node->backward_fn = [xs, weight_matrix, row, cols, n](Node& self) {
            const double* gd = self.grad.data();
            for (int64_t j = 0; j < cols; ++j) {
                if (xs[j]->requires_grad) {
                    xs[j]->ensure_grad();
                    const double wv = weight_matrix->value[row * cols + j];
                    double* gx = xs[j]->grad.data();
                    for (int64_t i = 0; i < n; ++i) gx[i] += wv * gd[i];
                }
                if (weight_matrix->requires_grad) {
                    weight_matrix->ensure_grad();
                    const double* xd = xs[j]->value.data();
                    double acc = 0.0;
                    for (int64_t i = 0; i < n; ++i) acc += gd[i] * xd[i];
                    weight_matrix->grad[row * cols + j] += acc;
                }
            }
        };
    }
    return node;
}

Var mean_all(const Var& x) {
    const int64_t n = x->value.numel();
    check(n > 0, "mean_all: empty tensor");
    double acc = 0.0;
    const double* xd = x->value.data();
    for (int64_t i = 0; i < n; ++i) acc += xd[i];
    auto node = make_node(Tensor::scalar(acc / static_cast<double>(n)), {x});
    if (node->requires_grad) {
        node->backward_fn = [x, n](Node& self) {
            x->ensure_grad();
            const double g = self.grad[0] / static_cast<double>(n);
            double* gx = x->grad.data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return node;
}

void backward(const Var& root) {
    check(root->value.numel() == 1, "backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Post-order DFS; reverse gives a valid topological order for backprop.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace ispl::ad

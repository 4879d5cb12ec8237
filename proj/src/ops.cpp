#include "caee/ops.hpp"

#include <algorithm>
#include <cmath>

#include "caee/errors.hpp"

namespace caee::ops {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    require(a.same_shape(b), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// [c_out x c_in x k] -> [k x c_out x c_in] so the channel loop is contiguous.
std::vector<double> kernel_by_tap(const Tensor& kernel) {
    const std::size_t cout = kernel.dim(0), cin = kernel.dim(1), k = kernel.dim(2);
    std::vector<double> out(kernel.size());
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t j = 0; j < k; ++j) out[(j * cout + o) * cin + i] = kernel(o, i, j);
    return out;
}

}  // namespace

NodeId linear(Graph& g, NodeId x_id, NodeId w_id, NodeId b_id) {
    const Tensor& x = g.value(x_id);
    const Tensor& w = g.value(w_id);
    const Tensor& b = g.value(b_id);
    require(x.rank() == 1 || x.rank() == 2, "linear: input must be rank 1 or 2, got " + shape_str(x.shape()));
    require(w.rank() == 2 && b.rank() == 1 && b.dim(0) == w.dim(0),
            "linear: weight " + shape_str(w.shape()) + " and bias " + shape_str(b.shape()) + " disagree");
    const std::size_t n_in = x.shape().back();
    require(w.dim(1) == n_in, "linear: input width " + std::to_string(n_in) + " vs weight " + shape_str(w.shape()));
    const std::size_t n_out = w.dim(0);
    const std::size_t rows = x.size() / n_in;

    Shape out_shape = x.shape();
    out_shape.back() = n_out;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * n_in;
        double* yr = out.data().data() + r * n_out;
        for (std::size_t o = 0; o < n_out; ++o) {
            const double* wr = w.data().data() + o * n_in;
            double acc = b[o];
            for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }

    return g.record(std::move(out), {x_id, w_id, b_id}, [x_id, w_id, b_id, rows, n_in, n_out](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& xv = gr.value(x_id);
        const Tensor& wv = gr.value(w_id);
        if (gr.requires_grad(x_id)) {
            auto& gx = gr.grad_mut(x_id);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double go = gy[r * n_out + o];
                    for (std::size_t i = 0; i < n_in; ++i) gx[r * n_in + i] += go * wv[o * n_in + i];
                }
        }
        if (gr.requires_grad(w_id)) {
            auto& gw = gr.grad_mut(w_id);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double go = gy[r * n_out + o];
                    for (std::size_t i = 0; i < n_in; ++i) gw[o * n_in + i] += go * xv[r * n_in + i];
                }
        }
        if (gr.requires_grad(b_id)) {
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < n_out; ++o) gb[o] += gy[r * n_out + o];
        }
    });
}

NodeId conv1d(Graph& g, NodeId x_id, NodeId k_id, NodeId b_id, Padding padding) {
    const Tensor& x = g.value(x_id);
    const Tensor& kernel = g.value(k_id);
    const Tensor& b = g.value(b_id);
    require(x.rank() == 2, "conv1d: input must be [w x c_in], got " + shape_str(x.shape()));
    require(kernel.rank() == 3, "conv1d: kernel must be [c_out x c_in x k], got " + shape_str(kernel.shape()));
    require(kernel.dim(1) == x.dim(1), "conv1d: input channels " + std::to_string(x.dim(1)) + " vs kernel " +
                                           shape_str(kernel.shape()));
    require(b.rank() == 1 && b.dim(0) == kernel.dim(0), "conv1d: bias " + shape_str(b.shape()) +
                                                            " does not match kernel " + shape_str(kernel.shape()));
    const std::size_t k = kernel.dim(2);
    require(k >= 1, "conv1d: kernel width must be at least 1");
    require(padding == Padding::causal || k % 2 == 1, "conv1d: same padding needs an odd kernel width");

    const std::size_t w = x.dim(0), cin = x.dim(1), cout = kernel.dim(0);
    const auto pad = static_cast<std::ptrdiff_t>(padding == Padding::same ? (k - 1) / 2 : k - 1);
    const std::vector<double> taps = kernel_by_tap(kernel);

    Tensor out({w, cout});
    const double* xd = x.data().data();
    for (std::size_t t = 0; t < w; ++t) {
        double* yr = out.data().data() + t * cout;
        for (std::size_t o = 0; o < cout; ++o) yr[o] = b[o];
        for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* xr = xd + static_cast<std::size_t>(src) * cin;
            const double* tap = taps.data() + j * cout * cin;
            for (std::size_t o = 0; o < cout; ++o) {
                const double* kr = tap + o * cin;
                double acc = 0.0;
                for (std::size_t i = 0; i < cin; ++i) acc += kr[i] * xr[i];
                yr[o] += acc;
            }
        }
    }

    return g.record(std::move(out), {x_id, k_id, b_id},
                    [x_id, k_id, b_id, w, cin, cout, k, pad, taps](Graph& gr, NodeId self) {
                        const Tensor& gy = gr.grad(self);
                        const double* gyd = gy.data().data();
                        if (gr.requires_grad(x_id)) {
                            double* gx = gr.grad_mut(x_id).data().data();
                            for (std::size_t t = 0; t < w; ++t)
                                for (std::size_t j = 0; j < k; ++j) {
                                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(w)) continue;
                                    double* gxr = gx + static_cast<std::size_t>(src) * cin;
                                    const double* tap = taps.data() + j * cout * cin;
                                    for (std::size_t o = 0; o < cout; ++o) {
                                        const double go = gyd[t * cout + o];
                                        const double* kr = tap + o * cin;
                                        for (std::size_t i = 0; i < cin; ++i) gxr[i] += go * kr[i];
                                    }
                                }
                        }
                        if (gr.requires_grad(k_id)) {
                            const double* xd = gr.value(x_id).data().data();
                            std::vector<double> gtaps(taps.size(), 0.0);
                            for (std::size_t t = 0; t < w; ++t)
                                for (std::size_t j = 0; j < k; ++j) {
                                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(w)) continue;
                                    const double* xr = xd + static_cast<std::size_t>(src) * cin;
                                    double* gtap = gtaps.data() + j * cout * cin;
                                    for (std::size_t o = 0; o < cout; ++o) {
                                        const double go = gyd[t * cout + o];
                                        double* gkr = gtap + o * cin;
                                        for (std::size_t i = 0; i < cin; ++i) gkr[i] += go * xr[i];
                                    }
                                }
                            Tensor& gk = gr.grad_mut(k_id);
                            for (std::size_t o = 0; o < cout; ++o)
                                for (std::size_t i = 0; i < cin; ++i)
                                    for (std::size_t j = 0; j < k; ++j) gk(o, i, j) += gtaps[(j * cout + o) * cin + i];
                        }
                        if (gr.requires_grad(b_id)) {
                            auto& gb = gr.grad_mut(b_id);
                            for (std::size_t t = 0; t < w; ++t)
                                for (std::size_t o = 0; o < cout; ++o) gb[o] += gyd[t * cout + o];
                        }
                    });
}

NodeId sigmoid(Graph& g, NodeId x_id) {
    const Tensor& x = g.value(x_id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
    return g.record(std::move(out), {x_id}, [x_id](Graph& gr, NodeId self) {
        const Tensor& y = gr.value(self);
        const Tensor& gy = gr.grad(self);
        auto& gx = gr.grad_mut(x_id);
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
    });
}

NodeId tanh(Graph& g, NodeId x_id) {
    const Tensor& x = g.value(x_id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return g.record(std::move(out), {x_id}, [x_id](Graph& gr, NodeId self) {
        const Tensor& y = gr.value(self);
        const Tensor& gy = gr.grad(self);
        auto& gx = gr.grad_mut(x_id);
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
    });
}

NodeId softmax_rows(Graph& g, NodeId x_id) {
    const Tensor& x = g.value(x_id);
    require(x.rank() == 2, "softmax_rows: input must be rank 2, got " + shape_str(x.shape()));
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        auto in = x.row(r);
        auto y = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(in[c] - mx);
            total += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
    }
    return g.record(std::move(out), {x_id}, [x_id, rows, cols](Graph& gr, NodeId self) {
        const Tensor& y = gr.value(self);
        const Tensor& gy = gr.grad(self);
        auto& gx = gr.grad_mut(x_id);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gy(r, c) * y(r, c);
            for (std::size_t c = 0; c < cols; ++c) gx(r, c) += y(r, c) * (gy(r, c) - dot);
        }
    });
}

NodeId elementwise(Graph& g, NodeId a_id, NodeId b_id, Elementwise kind) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    require_same(a, b, kind == Elementwise::add ? "add" : "mul");
    Tensor out(a.shape());
    if (kind == Elementwise::add) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
        return g.record(std::move(out), {a_id, b_id}, [a_id, b_id](Graph& gr, NodeId self) {
            const Tensor& gy = gr.grad(self);
            for (NodeId in : {a_id, b_id}) {
                if (!gr.requires_grad(in)) continue;
                auto& gi = gr.grad_mut(in);
                for (std::size_t i = 0; i < gy.size(); ++i) gi[i] += gy[i];
            }
        });
    }
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return g.record(std::move(out), {a_id, b_id}, [a_id, b_id](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(a_id)) {
            const Tensor& bv = gr.value(b_id);
            auto& ga = gr.grad_mut(a_id);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (gr.requires_grad(b_id)) {
            const Tensor& av = gr.value(a_id);
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        }
    });
}

NodeId sub(Graph& g, NodeId a_id, NodeId b_id) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    require_same(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return g.record(std::move(out), {a_id, b_id}, [a_id, b_id](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(a_id)) {
            auto& ga = gr.grad_mut(a_id);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        if (gr.requires_grad(b_id)) {
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
        }
    });
}

NodeId scale(Graph& g, NodeId x_id, double factor) {
    const Tensor& x = g.value(x_id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
    return g.record(std::move(out), {x_id}, [x_id, factor](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        auto& gx = gr.grad_mut(x_id);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
    });
}

NodeId matmul(Graph& g, NodeId a_id, NodeId b_id) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < n; ++kk) {
            const double av = a(i, kk);
            for (std::size_t j = 0; j < p; ++j) out(i, j) += av * b(kk, j);
        }
    return g.record(std::move(out), {a_id, b_id}, [a_id, b_id, m, n, p](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(a_id)) {
            const Tensor& bv = gr.value(b_id);
            auto& ga = gr.grad_mut(a_id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < n; ++kk) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p; ++j) acc += gy(i, j) * bv(kk, j);
                    ga(i, kk) += acc;
                }
        }
        if (gr.requires_grad(b_id)) {
            const Tensor& av = gr.value(a_id);
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < n; ++kk) {
                    const double aik = av(i, kk);
                    for (std::size_t j = 0; j < p; ++j) gb(kk, j) += aik * gy(i, j);
                }
        }
    });
}

NodeId matmul_nt(Graph& g, NodeId a_id, NodeId b_id) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
            "matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(0);
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < n; ++kk) acc += a(i, kk) * b(j, kk);
            out(i, j) = acc;
        }
    return g.record(std::move(out), {a_id, b_id}, [a_id, b_id, m, n, p](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(a_id)) {
            const Tensor& bv = gr.value(b_id);
            auto& ga = gr.grad_mut(a_id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    const double gij = gy(i, j);
                    for (std::size_t kk = 0; kk < n; ++kk) ga(i, kk) += gij * bv(j, kk);
                }
        }
        if (gr.requires_grad(b_id)) {
            const Tensor& av = gr.value(a_id);
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    const double gij = gy(i, j);
                    for (std::size_t kk = 0; kk < n; ++kk) gb(j, kk) += gij * av(i, kk);
                }
        }
    });
}

NodeId sq_error(Graph& g, NodeId a_id, NodeId b_id, Reduce reduce) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    require_same(a, b, "sq_error");
    const std::size_t cols = a.rank() == 0 ? 1 : a.shape().back();
    const std::size_t rows = cols == 0 ? 0 : a.size() / cols;

    Tensor out;
    if (reduce == Reduce::per_row) {
        out = Tensor({rows});
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                const double d = a[r * cols + c] - b[r * cols + c];
                acc += d * d;
            }
            out[r] = acc;
        }
    } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        if (reduce == Reduce::mean && a.size() > 0) acc /= static_cast<double>(a.size());
        out = Tensor::scalar(acc);
    }

    return g.record(std::move(out), {a_id, b_id}, [a_id, b_id, reduce, cols](Graph& gr, NodeId self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& av = gr.value(a_id);
        const Tensor& bv = gr.value(b_id);
        const double norm = reduce == Reduce::mean ? 1.0 / static_cast<double>(av.size()) : 1.0;
        auto upstream = [&](std::size_t i) { return reduce == Reduce::per_row ? gy[i / cols] : gy[0] * norm; };
        if (gr.requires_grad(a_id)) {
            auto& ga = gr.grad_mut(a_id);
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * (av[i] - bv[i]) * upstream(i);
        }
        if (gr.requires_grad(b_id)) {
            auto& gb = gr.grad_mut(b_id);
            for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= 2.0 * (av[i] - bv[i]) * upstream(i);
        }
    });
}

NodeId sum(Graph& g, NodeId x_id) {
    const Tensor& x = g.value(x_id);
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return g.record(Tensor::scalar(acc), {x_id}, [x_id](Graph& gr, NodeId self) {
        const double gy = gr.grad(self)[0];
        auto& gx = gr.grad_mut(x_id);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
    });
}

}  // namespace caee::ops

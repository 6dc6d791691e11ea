#include "salibi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace salibi {

namespace {

Tensor make_out(Shape shape, bool track) {
    return Tensor::zeros(std::move(shape), track);
}

bool track_any(const Tensor& a) { return a.requires_grad(); }
bool track_any(const Tensor& a, const Tensor& b) {
    return a.requires_grad() || b.requires_grad();
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(TensorImpl&)> fn) {
    if (!out.requires_grad()) return;
    auto* impl = out.raw();
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(fn);
}

void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected 2D tensor, got " +
                                    shape_str(t.shape()));
}

std::size_t last_dim(const Tensor& t, const char* op) {
    if (t.rank() == 0)
        throw std::invalid_argument(std::string(op) + ": scalar has no last axis");
    return t.shape().back();
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    Tensor out = make_out({m, n}, track_any(a, b));
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = od + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    attach(out, {a, b}, [m, k, n](TensorImpl& o) {
        TensorImpl& pa = *o.parents[0];
        TensorImpl& pb = *o.parents[1];
        const double* g = o.grad.data();
        if (pa.requires_grad) { // dA = dC·Bᵀ
            double* da = pa.grad.data();
            const double* bd = pb.data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    const double* brow = bd + j; // column j, stride n
                    for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gv * bd[p * n + j];
                    (void)brow;
                }
        }
        if (pb.requires_grad) { // dB = Aᵀ·dC
            double* db = pb.grad.data();
            const double* ad = pa.data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = ad[i * k + p];
                    const double* grow = g + i * n;
                    double* drow = db + p * n;
                    for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                }
        }
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Tensor out = make_out(a.shape(), track_any(a, b));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) + b.at(i);
    attach(out, {a, b}, [n](TensorImpl& o) {
        for (int side = 0; side < 2; ++side) {
            TensorImpl& p = *o.parents[side];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i];
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("sub: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Tensor out = make_out(a.shape(), track_any(a, b));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) - b.at(i);
    attach(out, {a, b}, [n](TensorImpl& o) {
        TensorImpl& pa = *o.parents[0];
        TensorImpl& pb = *o.parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n; ++i) pa.grad[i] += o.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n; ++i) pb.grad[i] -= o.grad[i];
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Tensor out = make_out(a.shape(), track_any(a, b));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) * b.at(i);
    attach(out, {a, b}, [n](TensorImpl& o) {
        TensorImpl& pa = *o.parents[0];
        TensorImpl& pb = *o.parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n; ++i) pa.grad[i] += o.grad[i] * pb.data[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n; ++i) pb.grad[i] += o.grad[i] * pa.data[i];
    });
    return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
    Tensor out = make_out(a.shape(), track_any(a));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) * c;
    attach(out, {a}, [n, c](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i] * c;
    });
    return out;
}

Tensor add_rows(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_rows");
    if (b.rank() != 1 || b.dim(0) != x.dim(1))
        throw std::invalid_argument("add_rows: bias " + shape_str(b.shape()) +
                                    " does not match row width of " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out = make_out(x.shape(), track_any(x, b));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data()[i * c + j] = x.at(i * c + j) + b.at(j);
    attach(out, {x, b}, [r, c](TensorImpl& o) {
        TensorImpl& px = *o.parents[0];
        TensorImpl& pb = *o.parents[1];
        if (px.requires_grad)
            for (std::size_t i = 0; i < r * c; ++i) px.grad[i] += o.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) pb.grad[j] += o.grad[i * c + j];
    });
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    const std::size_t L = last_dim(x, "softmax_rows");
    if (L < 1) throw std::invalid_argument("softmax_rows: empty last axis");
    const std::size_t rows = x.numel() / L;
    Tensor out = make_out(x.shape(), track_any(x));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.data().data() + r * L;
        double* o = out.data().data() + r * L;
        double mx = in[0];
        for (std::size_t j = 1; j < L; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (std::size_t j = 0; j < L; ++j) o[j] /= z;
    }
    attach(out, {x}, [rows, L](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = o.data.data() + r * L;
            const double* g = o.grad.data() + r * L;
            double dot = 0.0;
            for (std::size_t j = 0; j < L; ++j) dot += g[j] * y[j];
            double* d = p.grad.data() + r * L;
            for (std::size_t j = 0; j < L; ++j) d[j] += y[j] * (g[j] - dot);
        }
    });
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t L = last_dim(x, "layernorm");
    if (gamma.numel() != L || beta.numel() != L)
        throw std::invalid_argument("layernorm: gamma/beta size must equal last axis " +
                                    std::to_string(L));
    const std::size_t rows = x.numel() / L;
    Tensor out = make_out(x.shape(), x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    // cached per-row stats for backward
    auto mu = std::make_shared<std::vector<double>>(rows);
    auto rstd = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.data().data() + r * L;
        double m = 0.0;
        for (std::size_t j = 0; j < L; ++j) m += in[j];
        m /= static_cast<double>(L);
        double v = 0.0;
        for (std::size_t j = 0; j < L; ++j) v += (in[j] - m) * (in[j] - m);
        v /= static_cast<double>(L);
        const double rs = 1.0 / std::sqrt(v + eps);
        (*mu)[r] = m;
        (*rstd)[r] = rs;
        double* o = out.data().data() + r * L;
        for (std::size_t j = 0; j < L; ++j)
            o[j] = gamma.at(j) * (in[j] - m) * rs + beta.at(j);
    }
    attach(out, {x, gamma, beta}, [rows, L, mu, rstd](TensorImpl& o) {
        TensorImpl& px = *o.parents[0];
        TensorImpl& pg = *o.parents[1];
        TensorImpl& pb = *o.parents[2];
        const double inv_n = 1.0 / static_cast<double>(L);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* in = px.data.data() + r * L;
            const double* g = o.grad.data() + r * L;
            const double m = (*mu)[r];
            const double rs = (*rstd)[r];
            if (pg.requires_grad || pb.requires_grad) {
                for (std::size_t j = 0; j < L; ++j) {
                    const double xh = (in[j] - m) * rs;
                    if (pg.requires_grad) pg.grad[j] += g[j] * xh;
                    if (pb.requires_grad) pb.grad[j] += g[j];
                }
            }
            if (px.requires_grad) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t j = 0; j < L; ++j) {
                    const double dxh = g[j] * pg.data[j];
                    sum_g += dxh;
                    sum_gx += dxh * (in[j] - m) * rs;
                }
                double* d = px.grad.data() + r * L;
                for (std::size_t j = 0; j < L; ++j) {
                    const double xh = (in[j] - m) * rs;
                    const double dxh = g[j] * pg.data[j];
                    d[j] += rs * (dxh - inv_n * sum_g - xh * inv_n * sum_gx);
                }
            }
        }
    });
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = make_out(x.shape(), track_any(x));
    const std::size_t n = out.numel();
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.at(i);
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    attach(out, {x}, [n](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = p.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            p.grad[i] += o.grad[i] * (cdf + v * pdf);
        }
    });
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out = make_out(x.shape(), track_any(x));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::exp(x.at(i));
    attach(out, {x}, [n](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i] * o.data[i];
    });
    return out;
}

Tensor log(const Tensor& x) {
    Tensor out = make_out(x.shape(), track_any(x));
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::log(x.at(i));
    attach(out, {x}, [n](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i] / p.data[i];
    });
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = make_out({}, track_any(x));
    const std::size_t n = x.numel();
    double acc = 0.0; // fixed left-to-right order
    for (std::size_t i = 0; i < n; ++i) acc += x.at(i);
    out.data()[0] = acc;
    attach(out, {x}, [n](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        const double g = o.grad[0];
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += g;
    });
    return out;
}

Tensor mean(const Tensor& x) {
    const std::size_t n = x.numel();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return mul_scalar(sum(x), 1.0 / static_cast<double>(n));
}

Tensor sum_last(const Tensor& x) {
    const std::size_t L = last_dim(x, "sum_last");
    const std::size_t rows = x.numel() / L;
    Shape s(x.shape().begin(), x.shape().end() - 1);
    Tensor out = make_out(std::move(s), track_any(x));
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += x.at(r * L + j);
        out.data()[r] = acc;
    }
    attach(out, {x}, [rows, L](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < L; ++j) p.grad[r * L + j] += o.grad[r];
    });
    return out;
}

Tensor mean_axis0(const Tensor& x) {
    require_2d(x, "mean_axis0");
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (r == 0) throw std::invalid_argument("mean_axis0: no rows");
    Tensor out = make_out({c}, track_any(x));
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data()[j] += x.at(i * c + j);
    for (std::size_t j = 0; j < c; ++j) out.data()[j] *= inv;
    attach(out, {x}, [r, c, inv](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += o.grad[j] * inv;
    });
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(shape));
    Tensor out = make_out(std::move(shape), track_any(x));
    out.data() = x.data();
    const std::size_t n = x.numel();
    attach(out, {x}, [n](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += o.grad[i];
    });
    return out;
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor out = make_out({c, r}, track_any(x));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = x.at(i * c + j);
    attach(out, {x}, [r, c](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += o.grad[j * r + i];
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    bool track = false;
    for (const auto& t : xs) {
        require_2d(t, "concat");
        track = track || t.requires_grad();
    }
    const std::size_t other = axis == 0 ? xs[0].dim(1) : xs[0].dim(0);
    std::size_t total = 0;
    for (const auto& t : xs) {
        const std::size_t fixed = axis == 0 ? t.dim(1) : t.dim(0);
        if (fixed != other)
            throw std::invalid_argument("concat: mismatched shapes " + shape_str(xs[0].shape()) +
                                        " vs " + shape_str(t.shape()));
        total += t.dim(axis);
    }
    Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
    Tensor out = make_out(out_shape, track);
    std::vector<std::size_t> extents;
    extents.reserve(xs.size());
    std::size_t off = 0;
    for (const auto& t : xs) {
        const std::size_t e = t.dim(axis);
        extents.push_back(e);
        if (axis == 0) {
            std::copy(t.data().begin(), t.data().end(), out.data().begin() + off * other);
        } else {
            for (std::size_t i = 0; i < other; ++i)
                std::copy(t.data().begin() + i * e, t.data().begin() + (i + 1) * e,
                          out.data().begin() + i * total + off);
        }
        off += e;
    }
    std::vector<Tensor> parents(xs.begin(), xs.end());
    attach(out, parents, [axis, other, total, extents](TensorImpl& o) {
        std::size_t off2 = 0;
        for (std::size_t pi = 0; pi < o.parents.size(); ++pi) {
            TensorImpl& p = *o.parents[pi];
            const std::size_t e = extents[pi];
            if (p.requires_grad) {
                if (axis == 0) {
                    for (std::size_t i = 0; i < e * other; ++i)
                        p.grad[i] += o.grad[off2 * other + i];
                } else {
                    for (std::size_t i = 0; i < other; ++i)
                        for (std::size_t j = 0; j < e; ++j)
                            p.grad[i * e + j] += o.grad[i * total + off2 + j];
                }
            }
            off2 += e;
        }
    });
    return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    require_2d(x, "slice");
    if (axis > 1) throw std::invalid_argument("slice: axis must be 0 or 1");
    const std::size_t r = x.dim(0), c = x.dim(1);
    const std::size_t extent = axis == 0 ? r : c;
    if (len == 0 || start + len > extent)
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") exceeds axis extent " +
                                    std::to_string(extent));
    Shape out_shape = axis == 0 ? Shape{len, c} : Shape{r, len};
    Tensor out = make_out(out_shape, track_any(x));
    if (axis == 0) {
        std::copy(x.data().begin() + start * c, x.data().begin() + (start + len) * c,
                  out.data().begin());
    } else {
        for (std::size_t i = 0; i < r; ++i)
            std::copy(x.data().begin() + i * c + start, x.data().begin() + i * c + start + len,
                      out.data().begin() + i * len);
    }
    attach(out, {x}, [axis, start, len, r, c](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        if (axis == 0) {
            for (std::size_t i = 0; i < len * c; ++i) p.grad[start * c + i] += o.grad[i];
        } else {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    p.grad[i * c + start + j] += o.grad[i * len + j];
        }
    });
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    require_2d(x, "gather_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    for (auto idx : rows)
        if (idx >= r)
            throw std::invalid_argument("gather_rows: index " + std::to_string(idx) +
                                        " out of range for " + shape_str(x.shape()));
    Tensor out = make_out({rows.size(), c}, track_any(x));
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(x.data().begin() + rows[i] * c, x.data().begin() + (rows[i] + 1) * c,
                  out.data().begin() + i * c);
    attach(out, {x}, [rows, c](TensorImpl& o) {
        TensorImpl& p = *o.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < c; ++j) p.grad[rows[i] * c + j] += o.grad[i * c + j];
    });
    return out;
}

Tensor patchify(const Tensor& image, std::size_t channels, std::size_t height,
                std::size_t width, std::size_t patch_px) {
    if (image.numel() != channels * height * width)
        throw std::invalid_argument("patchify: image " + shape_str(image.shape()) +
                                    " does not hold " + std::to_string(channels) + "x" +
                                    std::to_string(height) + "x" + std::to_string(width));
    if (patch_px == 0 || height % patch_px != 0 || width % patch_px != 0)
        throw std::invalid_argument("patchify: dims " + std::to_string(height) + "x" +
                                    std::to_string(width) + " not divisible by patch size " +
                                    std::to_string(patch_px));
    const std::size_t pr = height / patch_px, pc = width / patch_px;
    const std::size_t L = pr * pc, P = channels * patch_px * patch_px;
    // flat index map: out[l*P + e] = img[map[l*P + e]]
    auto index_map = std::make_shared<std::vector<std::size_t>>(L * P);
    std::size_t o = 0;
    for (std::size_t r = 0; r < pr; ++r)
        for (std::size_t c = 0; c < pc; ++c)
            for (std::size_t ch = 0; ch < channels; ++ch)
                for (std::size_t py = 0; py < patch_px; ++py)
                    for (std::size_t px = 0; px < patch_px; ++px)
                        (*index_map)[o++] =
                            ch * height * width + (r * patch_px + py) * width + c * patch_px + px;
    Tensor out = make_out({L, P}, track_any(image));
    for (std::size_t i = 0; i < L * P; ++i) out.data()[i] = image.at((*index_map)[i]);
    attach(out, {image}, [index_map](TensorImpl& out_impl) {
        TensorImpl& p = *out_impl.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < index_map->size(); ++i)
            p.grad[(*index_map)[i]] += out_impl.grad[i];
    });
    return out;
}

} // namespace salibi

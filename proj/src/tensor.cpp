#include "t2v/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace t2v {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_matrix(const Tensor& t, const char* op) {
    require(t.defined() && t.ndim() == 2, std::string(op) + ": rank-2 tensor required");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) throw std::runtime_error(std::string(op) + ": non-finite input");
    }
}

double phi_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }
double phi_pdf(double x) { return std::exp(-0.5 * x * x) * 0.39894228040143267794; }

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- construction ----------------------------------------------------------

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) {
            if (p.node()->requires_grad) {
                any = true;
                break;
            }
        }
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const auto& p : parents) n->parents.push_back(p.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    require(shape.size() == 2 && shape[0] >= 1 && shape[1] >= 1,
            "tensor: shape must be rank-2 with positive extents, got " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->values.assign(shape[0] * shape[1], value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    require(shape.size() == 2 && shape[0] >= 1 && shape[1] >= 1,
            "tensor: shape must be rank-2 with positive extents, got " + shape_str(shape));
    require(shape[0] * shape[1] == values.size(),
            "tensor: shape " + shape_str(shape) + " does not match value count " +
                std::to_string(values.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1, 1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.values()) v = rng.normal() * stddev;
    return t;
}

std::size_t Tensor::rows() const { return n_->shape[0]; }
std::size_t Tensor::cols() const { return n_->shape[1]; }

double Tensor::item() const {
    require(size() == 1, "item: tensor is not scalar, shape " + shape_str(shape()));
    return n_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (n_->grad.empty()) throw std::runtime_error("grad: no gradient recorded for this tensor");
    return n_->grad;
}

// ---- elementwise and linear algebra ----------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    require(a.cols() == b.rows(), "matmul: inner extents differ, " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = av[i * k + l];
            const double* brow = bv + l * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        const double* g = o.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA[i,l] += sum_j dC[i,j] * B[l,j]
            const double* bv = pb.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    const double* grow = g + i * n;
                    const double* brow = bv + l * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    pa.grad[i * k + l] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB[l,j] += sum_i A[i,l] * dC[i,j]
            const double* av = pa.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g + i * n;
                for (std::size_t l = 0; l < k; ++l) {
                    const double ail = av[i * k + l];
                    double* brow = pb.grad.data() + l * n;
                    for (std::size_t j = 0; j < n; ++j) brow[j] += ail * grow[j];
                }
            }
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, double s) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    require(std::isfinite(s), "matmul_nt: scale must be finite");
    require(a.cols() == b.cols(), "matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()) + " transposed");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = av + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bv + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            out[i * n + j] = acc * s;
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n, s](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        const double* g = o.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA[i,l] += s * sum_j dC[i,j] * B[j,l]
            const double* bv = pb.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                double* arow = pa.grad.data() + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = g[i * n + j] * s;
                    const double* brow = bv + j * k;
                    for (std::size_t l = 0; l < k; ++l) arow[l] += gij * brow[l];
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB[j,l] += s * sum_i dC[i,j] * A[i,l]
            const double* av = pa.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = av + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = g[i * n + j] * s;
                    double* brow = pb.grad.data() + j * k;
                    for (std::size_t l = 0; l < k; ++l) brow[l] += gij * arow[l];
                }
            }
        }
    });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_matrix(x, "affine");
    require_matrix(w, "affine");
    require(x.cols() == w.rows(), "affine: inner extents differ, " + shape_str(x.shape()) +
                                      " vs " + shape_str(w.shape()));
    require(b.rows() == 1 && b.cols() == w.cols(),
            "affine: bias must be [1x" + std::to_string(w.cols()) + "], got " +
                shape_str(b.shape()));
    const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
    std::vector<double> out(m * n, 0.0);
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double xil = xv[i * k + l];
            const double* wrow = wv + l * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += xil * wrow[j];
        }
        for (std::size_t j = 0; j < n; ++j) orow[j] += bv[j];
    }
    return make_op({m, n}, std::move(out), {x, w, b}, [m, k, n](TensorNode& o) {
        auto& px = *o.parents[0];
        auto& pw = *o.parents[1];
        auto& pb = *o.parents[2];
        const double* g = o.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            const double* wv = pw.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    const double* grow = g + i * n;
                    const double* wrow = wv + l * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
                    px.grad[i * k + l] += acc;
                }
            }
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            const double* xv = px.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g + i * n;
                for (std::size_t l = 0; l < k; ++l) {
                    const double xil = xv[i * k + l];
                    double* wrow = pw.grad.data() + l * n;
                    for (std::size_t j = 0; j < n; ++j) wrow[j] += xil * grow[j];
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g + i * n;
                for (std::size_t j = 0; j < n; ++j) pb.grad[j] += grow[j];
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    return make_op({n, m}, std::move(out), {a}, [m, n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) p.grad[i * n + j] += o.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_matrix(a, "add");
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
        for (int s = 0; s < 2; ++s) {
            auto& p = *o.parents[s];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_matrix(a, "sub");
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "mul");
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.values[i];
        }
    });
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& row) {
    require_matrix(x, "add_row_broadcast");
    require(row.rows() == 1 && row.cols() == x.cols(),
            "add_row_broadcast: row shape " + shape_str(row.shape()) + " does not broadcast over " +
                shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.values()[i * n + j] + row.values()[j];
    return make_op({m, n}, std::move(out), {x, row}, [m, n](TensorNode& o) {
        auto& px = *o.parents[0];
        auto& pr = *o.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i];
        }
        if (pr.requires_grad) {
            pr.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pr.grad[j] += o.grad[i * n + j];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    require_matrix(a, "scale");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += c * o.grad[i];
    });
}

Tensor exp(const Tensor& a) {
    require_matrix(a, "exp");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] * o.values[i];
    });
}

Tensor log(const Tensor& a) {
    require_matrix(a, "log");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] / p.values[i];
    });
}

Tensor clamp_max(const Tensor& a, double cap) {
    require_matrix(a, "clamp_max");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.values()[i], cap);
    return make_op(a.shape(), std::move(out), {a}, [cap](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (p.values[i] <= cap) p.grad[i] += o.grad[i];
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_matrix(x, "softmax_rows");
    check_finite(x, "softmax_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.values().data() + i * n;
        double mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(xr[j] - mx);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return make_op({m, n}, std::move(out), {x}, [m, n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = o.values.data() + i * n;
            const double* g = o.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_softmax_rows(const Tensor& x) {
    require_matrix(x, "log_softmax_rows");
    check_finite(x, "log_softmax_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.values().data() + i * n;
        double mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xr[j] - lse;
    }
    return make_op({m, n}, std::move(out), {x}, [m, n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = o.values.data() + i * n;
            const double* g = o.grad.data() + i * n;
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) gsum += g[j];
            for (std::size_t j = 0; j < n; ++j)
                p.grad[i * n + j] += g[j] - std::exp(y[j]) * gsum;
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_matrix(x, "layer_norm");
    require(eps >= 0.0, "layer_norm: eps must be nonnegative");
    const std::size_t m = x.rows(), d = x.cols();
    require(gamma.rows() == 1 && gamma.cols() == d,
            "layer_norm: gamma shape " + shape_str(gamma.shape()) + " does not match width " +
                std::to_string(d));
    require(beta.rows() == 1 && beta.cols() == d,
            "layer_norm: beta shape " + shape_str(beta.shape()) + " does not match width " +
                std::to_string(d));
    std::vector<double> out(m * d);
    std::vector<double> xhat(m * d);
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.values().data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (xr[j] - mu) * inv;
            out[i * d + j] = gamma.values()[j] * xhat[i * d + j] + beta.values()[j];
        }
    }
    return make_op({m, d}, std::move(out), {x, gamma, beta},
                   [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& o) {
                       auto& px = *o.parents[0];
                       auto& pg = *o.parents[1];
                       auto& pb = *o.parents[2];
                       if (pg.requires_grad) {
                           pg.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                   pg.grad[j] += o.grad[i * d + j] * xhat[i * d + j];
                       }
                       if (pb.requires_grad) {
                           pb.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < d; ++j) pb.grad[j] += o.grad[i * d + j];
                       }
                       if (px.requires_grad) {
                           px.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i) {
                               const double* g = o.grad.data() + i * d;
                               const double* xh = xhat.data() + i * d;
                               double h_mean = 0.0, hx_mean = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double h = pg.values[j] * g[j];
                                   h_mean += h;
                                   hx_mean += h * xh[j];
                               }
                               h_mean /= static_cast<double>(d);
                               hx_mean /= static_cast<double>(d);
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double h = pg.values[j] * g[j];
                                   px.grad[i * d + j] +=
                                       inv_std[i] * (h - h_mean - xh[j] * hx_mean);
                               }
                           }
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    require_matrix(x, "gelu");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * phi_cdf(x.values()[i]);
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double v = p.values[i];
            p.grad[i] += o.grad[i] * (phi_cdf(v) + v * phi_pdf(v));
        }
    });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    require_matrix(x, "l2_normalize_rows");
    require(eps > 0.0, "l2_normalize_rows: eps must be positive");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = x.values().data() + i * n;
        double sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) sq += xr[j] * xr[j];
        const double nrm = std::sqrt(sq);
        norms[i] = nrm;
        if (nrm < eps) {
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = 0.0;  // guarded zero row
        } else {
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xr[j] / nrm;
        }
    }
    return make_op({m, n}, std::move(out), {x},
                   [m, n, eps, norms = std::move(norms)](TensorNode& o) {
                       auto& p = *o.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                           if (norms[i] < eps) continue;  // guarded rows get zero gradient
                           const double* y = o.values.data() + i * n;
                           const double* g = o.grad.data() + i * n;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
                           for (std::size_t j = 0; j < n; ++j)
                               p.grad[i * n + j] += (g[j] - y[j] * dot) / norms[i];
                       }
                   });
}

Tensor sum_all(const Tensor& x) {
    require_matrix(x, "sum_all");
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_op({1, 1}, {s}, {x}, [](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += o.grad[0];
    });
}

Tensor mean_rows(const Tensor& x) {
    require_matrix(x, "mean_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x.values()[i * n + j];
    for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
    return make_op({1, n}, std::move(out), {x}, [m, n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += o.grad[j] * inv;
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_matrix(a, "concat_rows");
    require_matrix(b, "concat_rows");
    require(a.cols() == b.cols(), "concat_rows: width mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
    const std::size_t ma = a.rows(), mb = b.rows(), n = a.cols();
    std::vector<double> out;
    out.reserve((ma + mb) * n);
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    return make_op({ma + mb, n}, std::move(out), {a, b}, [ma, n](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        const std::size_t split = ma * n;
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < split; ++i) pa.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += o.grad[split + i];
        }
    });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    require_matrix(x, "slice_cols");
    require(count >= 1 && start + count <= x.cols(),
            "slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                ") out of bounds for " + shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.values()[i * n + start + j];
    return make_op({m, count}, std::move(out), {x}, [m, n, start, count](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j)
                p.grad[i * n + start + j] += o.grad[i * count + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        require(p.rows() == m, "concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                                   " vs " + shape_str(p.shape()));
        n += p.cols();
    }
    std::vector<double> out(m * n);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j)
                out[i * n + off + j] = p.values()[i * p.cols() + j];
        off += p.cols();
    }
    return make_op({m, n}, std::move(out), parts,
                   [m, n, offsets = std::move(offsets)](TensorNode& o) {
                       for (std::size_t s = 0; s < o.parents.size(); ++s) {
                           auto& p = *o.parents[s];
                           if (!p.requires_grad) continue;
                           p.ensure_grad();
                           const std::size_t w = p.shape[1];
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                   p.grad[i * w + j] += o.grad[i * n + offsets[s] + j];
                       }
                   });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
    require_matrix(a, "rowwise_dot");
    require_same_shape(a, b, "rowwise_dot");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a.values()[i * n + j] * b.values()[i * n + j];
    return make_op({m, 1}, std::move(out), {a, b}, [m, n](TensorNode& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    pa.grad[i * n + j] += o.grad[i] * pb.values[i * n + j];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    pb.grad[i * n + j] += o.grad[i] * pa.values[i * n + j];
        }
    });
}

Tensor take_diag(const Tensor& x) {
    require_matrix(x, "take_diag");
    require(x.rows() == x.cols(), "take_diag: square matrix required, got " + shape_str(x.shape()));
    const std::size_t n = x.rows();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x.values()[i * n + i];
    return make_op({1, n}, std::move(out), {x}, [n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) p.grad[i * n + i] += o.grad[i];
    });
}

Tensor zero_diag(const Tensor& x) {
    require_matrix(x, "zero_diag");
    require(x.rows() == x.cols(), "zero_diag: square matrix required, got " + shape_str(x.shape()));
    const std::size_t n = x.rows();
    std::vector<double> out = x.values();
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 0.0;
    return make_op({n, n}, std::move(out), {x}, [n](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) p.grad[i * n + j] += o.grad[i * n + j];
    });
}

Tensor stack_scalars(const std::vector<Tensor>& entries, std::size_t rows, std::size_t cols) {
    require(entries.size() == rows * cols, "stack_scalars: " + std::to_string(entries.size()) +
                                               " entries for " + std::to_string(rows) + "x" +
                                               std::to_string(cols));
    std::vector<double> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        require(entries[i].size() == 1, "stack_scalars: entry " + std::to_string(i) +
                                            " is not scalar, shape " +
                                            shape_str(entries[i].shape()));
        out[i] = entries[i].values()[0];
    }
    return make_op({rows, cols}, std::move(out), entries, [](TensorNode& o) {
        for (std::size_t i = 0; i < o.parents.size(); ++i) {
            auto& p = *o.parents[i];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            p.grad[0] += o.grad[i];
        }
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    require_matrix(table, "embedding_lookup");
    require(!ids.empty(), "embedding_lookup: empty id list");
    const std::size_t v = table.rows(), d = table.cols();
    for (int id : ids) {
        require(id >= 0 && static_cast<std::size_t>(id) < v,
                "embedding_lookup: id " + std::to_string(id) + " out of range [0, " +
                    std::to_string(v) + ")");
    }
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = table.values()[static_cast<std::size_t>(ids[i]) * d + j];
    return make_op({ids.size(), d}, std::move(out), {table}, [d, ids](TensorNode& o) {
        auto& p = *o.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                p.grad[static_cast<std::size_t>(ids[i]) * d + j] += o.grad[i * d + j];
    });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
    require(loss.defined() && loss.size() == 1,
            "backward: loss must be a scalar, got " +
                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!loss.node()->requires_grad) {
        throw std::invalid_argument("backward: loss is not connected to the tape");
    }

    // iterative DFS post-order: children (parents in graph terms) first
    static thread_local std::uint64_t epoch = 0;
    const std::uint64_t mark = ++epoch;
    std::vector<TensorNode*> topo;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.reserve(256);
    stack.emplace_back(loss.node().get(), 0);
    loss.node()->visit_mark = mark;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* next = node->parents[idx].get();
            ++idx;
            if (next->requires_grad && next->visit_mark != mark) {
                next->visit_mark = mark;
                stack.emplace_back(next, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params, double h, double tol,
                           double atol) {
    require(h >= 1e-7 && h <= 1e-3, "grad_check: h must lie in [1e-7, 1e-3]");
    for (const auto& p : params) p.tensor.node()->grad.clear();

    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw std::runtime_error("grad_check: non-finite loss");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (p.tensor.has_grad())
            analytic.push_back(p.tensor.grad());
        else
            analytic.emplace_back(p.tensor.size(), 0.0);
    }

    GradCheckReport rep;
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].tensor.node()->values;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double fp = loss_fn().item();
            vals[i] = orig - h;
            const double fm = loss_fn().item();
            vals[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("grad_check: non-finite loss during perturbation of " +
                                         params[pi].name);
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[pi][i];
            const double adiff = std::abs(num - ana);
            const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
            // below atol the difference is central-difference roundoff, not signal
            const double rel = adiff <= atol ? 0.0 : adiff / denom;
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name;
                rep.worst_index = i;
                rep.analytic = ana;
                rep.numeric = num;
            }
        }
    }
    rep.passed = rep.max_rel_err < tol;
    return rep;
}

}  // namespace t2v

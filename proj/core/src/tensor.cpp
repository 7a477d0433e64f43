#include "emodyn/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <utility>

#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw TrainingError(std::string(op) + " produced a non-finite value");
        }
    }
}

// Interprets a rank-1 tensor as a single row.
void matrix_dims(const Tensor& t, std::size_t& rows, std::size_t& cols, const char* op) {
    if (t.rank() == 1) {
        rows = 1;
        cols = t.shape()[0];
    } else if (t.rank() == 2) {
        rows = t.shape()[0];
        cols = t.shape()[1];
    } else {
        throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " +
                             shape_str(t.shape()));
    }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(product(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           bool requires_grad) {
    if (product(shape) != values.size()) {
        throw DimensionError("from_values: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " elements");
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::randn(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng,
                     bool requires_grad) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : t.values()) {
        do {
            x = dist(rng);
        } while (std::abs(x) > 2.0 * stddev);
    }
    return t;
}

const std::vector<std::size_t>& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
std::size_t Tensor::rows() const { return rank() <= 1 ? 1 : impl_->shape[0]; }
std::size_t Tensor::cols() const { return impl_->shape.empty() ? 0 : impl_->shape.back(); }

std::vector<double>& Tensor::values() { return impl_->data; }
const std::vector<double>& Tensor::values() const { return impl_->data; }

double& Tensor::operator()(std::size_t i) { return impl_->data[i]; }
double Tensor::operator()(std::size_t i) const { return impl_->data[i]; }
double& Tensor::operator()(std::size_t i, std::size_t j) {
    return impl_->data[i * cols() + j];
}
double Tensor::operator()(std::size_t i, std::size_t j) const {
    return impl_->data[i * cols() + j];
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item(): tensor " + shape_str(shape()) + " is not scalar");
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool requires_grad) { impl_->requires_grad = requires_grad; }

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = previous_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Tensor::Impl> result, std::function<void()> rule) {
    nodes_.push_back({std::move(result), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    // Intermediate adjoints are scratch state of this traversal; leaves keep
    // accumulating across calls.
    for (auto& node : nodes_) {
        node.result->grad.assign(node.result->data.size(), 0.0);
    }
    auto& seed = loss.impl_->grad;
    if (seed.empty()) seed.assign(loss.impl_->data.size(), 0.0);
    seed[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->rule();
    }
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (!tape) throw ContractError("backward: no active tape");
    tape->backward(loss);
}

// ---- op plumbing ----------------------------------------------------------

struct OpRecorder {
    static std::shared_ptr<Tensor::Impl> impl(const Tensor& t) { return t.impl_; }

    static std::vector<double>& grad(const std::shared_ptr<Tensor::Impl>& impl) {
        if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
        return impl->grad;
    }

    static bool tracing(std::initializer_list<const Tensor*> inputs) {
        if (!Tape::active()) return false;
        for (const Tensor* t : inputs) {
            if (t->requires_grad()) return true;
        }
        return false;
    }

    static void record(Tensor& result, std::function<void()> rule) {
        result.set_requires_grad(true);
        Tape::active()->record(impl(result), std::move(rule));
    }
};

using Rec = OpRecorder;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

Tensor unary_elementwise(const Tensor& x, const char* name,
                         const std::function<double(double)>& fwd,
                         const std::function<double(double, double)>& dval) {
    Tensor y(x.shape());
    const auto& xs = x.values();
    auto& ys = y.values();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
    check_finite(ys, name);
    if (Rec::tracing({&x})) {
        auto xi = Rec::impl(x), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, dval]() {
            auto& gx = Rec::grad(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += dval(xi->data[i], yi->data[i]) * yi->grad[i];
            }
        });
    }
    return y;
}

}  // namespace

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    std::size_t m, k, k2, n;
    matrix_dims(a, m, k, "matmul");
    matrix_dims(b, k2, n, "matmul");
    if (b.rank() != 2 || k != k2) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    }
    Tensor c(a.rank() == 1 ? std::vector<std::size_t>{n} : std::vector<std::size_t>{m, n});
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n, (int)k, 1.0,
                a.values().data(), (int)k, b.values().data(), (int)n, 0.0,
                c.values().data(), (int)n);
    check_finite(c.values(), "matmul");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci, m, n, k]() {
            if (ai->requires_grad) {
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)k, (int)n,
                            1.0, ci->grad.data(), (int)n, bi->data.data(), (int)n, 1.0,
                            Rec::grad(ai).data(), (int)k);
            }
            if (bi->requires_grad) {
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)k, (int)n, (int)m,
                            1.0, ai->data.data(), (int)k, ci->grad.data(), (int)n, 1.0,
                            Rec::grad(bi).data(), (int)n);
            }
        });
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    std::size_t m, k, n, k2;
    matrix_dims(a, m, k, "matmul_nt");
    matrix_dims(b, n, k2, "matmul_nt");
    if (k != k2) {
        throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()) + "^T");
    }
    Tensor c(a.rank() == 1 ? std::vector<std::size_t>{n} : std::vector<std::size_t>{m, n});
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)n, (int)k, 1.0,
                a.values().data(), (int)k, b.values().data(), (int)k, 0.0,
                c.values().data(), (int)n);
    check_finite(c.values(), "matmul_nt");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci, m, n, k]() {
            if (ai->requires_grad) {
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)k, (int)n,
                            1.0, ci->grad.data(), (int)n, bi->data.data(), (int)k, 1.0,
                            Rec::grad(ai).data(), (int)k);
            }
            if (bi->requires_grad) {
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)n, (int)k, (int)m,
                            1.0, ci->grad.data(), (int)n, ai->data.data(), (int)k, 1.0,
                            Rec::grad(bi).data(), (int)k);
            }
        });
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c(i) = a(i) + b(i);
    check_finite(c.values(), "add");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci]() {
            if (ai->requires_grad) {
                auto& g = Rec::grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = Rec::grad(bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
        });
    }
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c(i) = a(i) - b(i);
    check_finite(c.values(), "sub");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci]() {
            if (ai->requires_grad) {
                auto& g = Rec::grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ci->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = Rec::grad(bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= ci->grad[i];
            }
        });
    }
    return c;
}

Tensor add_bias_row(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || bias.size() != x.cols()) {
        throw DimensionError("add_bias_row: bias " + shape_str(bias.shape()) +
                             " does not match row width of " + shape_str(x.shape()));
    }
    Tensor y(x.shape());
    const std::size_t n = x.cols(), m = x.size() / n;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) y(i * n + j) = x(i * n + j) + bias(j);
    }
    check_finite(y.values(), "add_bias_row");
    if (Rec::tracing({&x, &bias})) {
        auto xi = Rec::impl(x), bi = Rec::impl(bias), yi = Rec::impl(y);
        Rec::record(y, [xi, bi, yi, m, n]() {
            if (xi->requires_grad) {
                auto& g = Rec::grad(xi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = Rec::grad(bi);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) g[j] += yi->grad[i * n + j];
                }
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double c) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y(i) = c * x(i);
    check_finite(y.values(), "scale");
    if (Rec::tracing({&x})) {
        auto xi = Rec::impl(x), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, c]() {
            auto& g = Rec::grad(xi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * yi->grad[i];
        });
    }
    return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c(i) = a(i) * b(i);
    check_finite(c.values(), "hadamard");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci]() {
            if (ai->requires_grad) {
                auto& g = Rec::grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += bi->data[i] * ci->grad[i];
            }
            if (bi->requires_grad) {
                auto& g = Rec::grad(bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += ai->data[i] * ci->grad[i];
            }
        });
    }
    return c;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw DimensionError("mul_scalar: weight must be scalar");
    const double w = s.values()[0];
    Tensor y(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y(i) = w * x(i);
    check_finite(y.values(), "mul_scalar");
    if (Rec::tracing({&x, &s})) {
        auto xi = Rec::impl(x), si = Rec::impl(s), yi = Rec::impl(y);
        Rec::record(y, [xi, si, yi]() {
            const double w = si->data[0];
            if (xi->requires_grad) {
                auto& g = Rec::grad(xi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * yi->grad[i];
            }
            if (si->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < xi->data.size(); ++i) {
                    acc += xi->data[i] * yi->grad[i];
                }
                Rec::grad(si)[0] += acc;
            }
        });
    }
    return y;
}

Tensor one_minus(const Tensor& x) {
    return unary_elementwise(
        x, "one_minus", [](double v) { return 1.0 - v; },
        [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
    return unary_elementwise(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    static constexpr double inv_sqrt2 = 0.7071067811865475244;
    static constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary_elementwise(
        x, "gelu",
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) +
                   v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

Tensor tanh(const Tensor& x) {
    return unary_elementwise(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x, "sigmoid",
        [](double v) {
            return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                            : std::exp(v) / (1.0 + std::exp(v));
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& x) {
    Tensor y(x.shape());
    const std::size_t n = x.cols(), m = x.size() / n;
    for (std::size_t i = 0; i < m; ++i) {
        const double* xs = x.values().data() + i * n;
        double* ys = y.values().data() + i * n;
        double mx = xs[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xs[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            ys[j] = std::exp(xs[j] - mx);
            z += ys[j];
        }
        for (std::size_t j = 0; j < n; ++j) ys[j] /= z;
    }
    check_finite(y.values(), "softmax");
    if (Rec::tracing({&x})) {
        auto xi = Rec::impl(x), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, m, n]() {
            auto& gx = Rec::grad(xi);
            for (std::size_t i = 0; i < m; ++i) {
                const double* ys = yi->data.data() + i * n;
                const double* gy = yi->grad.data() + i * n;
                double dotv = 0.0;
                for (std::size_t j = 0; j < n; ++j) dotv += ys[j] * gy[j];
                for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] += ys[j] * (gy[j] - dotv);
                }
            }
        });
    }
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    const std::size_t n = x.cols(), m = x.size() / n;
    if (gamma.size() != n || beta.size() != n) {
        throw DimensionError("layer_norm: gamma/beta width does not match " +
                             shape_str(x.shape()));
    }
    Tensor y(x.shape());
    std::vector<double> inv_std(m), xhat(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* xs = x.values().data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xs[j];
        mean /= (double)n;
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xs[j] - mean) * (xs[j] - mean);
        var /= (double)n;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xs[j] - mean) * inv_std[i];
            y(i * n + j) = gamma(j) * xhat[i * n + j] + beta(j);
        }
    }
    check_finite(y.values(), "layer_norm");
    if (Rec::tracing({&x, &gamma, &beta})) {
        auto xi = Rec::impl(x), gi = Rec::impl(gamma), bi = Rec::impl(beta),
             yi = Rec::impl(y);
        Rec::record(y, [xi, gi, bi, yi, m, n, inv_std = std::move(inv_std),
                        xhat = std::move(xhat)]() {
            for (std::size_t i = 0; i < m; ++i) {
                const double* gy = yi->grad.data() + i * n;
                const double* xh = xhat.data() + i * n;
                if (gi->requires_grad) {
                    auto& gg = Rec::grad(gi);
                    for (std::size_t j = 0; j < n; ++j) gg[j] += gy[j] * xh[j];
                }
                if (bi->requires_grad) {
                    auto& gb = Rec::grad(bi);
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gy[j];
                }
                if (xi->requires_grad) {
                    auto& gx = Rec::grad(xi);
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxhat = gy[j] * gi->data[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xh[j];
                    }
                    mean_dxhat /= (double)n;
                    mean_dxhat_xhat /= (double)n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxhat = gy[j] * gi->data[j];
                        gx[i * n + j] +=
                            inv_std[i] * (dxhat - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
            }
        });
    }
    return y;
}

Tensor concat_last_axis(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() > 2 ||
        (a.rank() == 2 && a.rows() != b.rows())) {
        throw DimensionError("concat_last_axis: incompatible shapes " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
    Tensor c(a.rank() == 1 ? std::vector<std::size_t>{na + nb}
                           : std::vector<std::size_t>{m, na + nb});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) c(i * (na + nb) + j) = a(i * na + j);
        for (std::size_t j = 0; j < nb; ++j) c(i * (na + nb) + na + j) = b(i * nb + j);
    }
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), ci = Rec::impl(c);
        Rec::record(c, [ai, bi, ci, m, na, nb]() {
            for (std::size_t i = 0; i < m; ++i) {
                if (ai->requires_grad) {
                    auto& g = Rec::grad(ai);
                    for (std::size_t j = 0; j < na; ++j) {
                        g[i * na + j] += ci->grad[i * (na + nb) + j];
                    }
                }
                if (bi->requires_grad) {
                    auto& g = Rec::grad(bi);
                    for (std::size_t j = 0; j < nb; ++j) {
                        g[i * nb + j] += ci->grad[i * (na + nb) + na + j];
                    }
                }
            }
        });
    }
    return c;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: empty input");
    const std::size_t d = rows.front().size();
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.size() != d) {
            throw DimensionError("stack_rows: rows must all be rank-1 of equal length");
        }
    }
    Tensor y({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(y.values().data() + i * d, rows[i].values().data(), d * sizeof(double));
    }
    bool traced = false;
    if (Tape::active()) {
        for (const Tensor& r : rows) traced = traced || r.requires_grad();
    }
    if (traced) {
        std::vector<decltype(Rec::impl(y))> parents;
        parents.reserve(rows.size());
        for (const Tensor& r : rows) parents.push_back(Rec::impl(r));
        auto yi = Rec::impl(y);
        Rec::record(y, [parents = std::move(parents), yi, d]() {
            for (std::size_t i = 0; i < parents.size(); ++i) {
                if (!parents[i]->requires_grad) continue;
                auto& g = Rec::grad(parents[i]);
                for (std::size_t j = 0; j < d; ++j) g[j] += yi->grad[i * d + j];
            }
        });
    }
    return y;
}

Tensor take_row(const Tensor& x, std::size_t row) {
    if (x.rank() != 2 || row >= x.rows()) {
        throw ContractError("take_row: row " + std::to_string(row) + " out of range for " +
                            shape_str(x.shape()));
    }
    const std::size_t n = x.cols();
    Tensor y({n});
    std::memcpy(y.values().data(), x.values().data() + row * n, n * sizeof(double));
    if (Rec::tracing({&x})) {
        auto xi = Rec::impl(x), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, row, n]() {
            auto& g = Rec::grad(xi);
            for (std::size_t j = 0; j < n; ++j) g[row * n + j] += yi->grad[j];
        });
    }
    return y;
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
        throw DimensionError("dot: expected equal-length vectors, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a(i) * b(i);
    Tensor y = Tensor::scalar(acc);
    check_finite(y.values(), "dot");
    if (Rec::tracing({&a, &b})) {
        auto ai = Rec::impl(a), bi = Rec::impl(b), yi = Rec::impl(y);
        Rec::record(y, [ai, bi, yi]() {
            const double gy = yi->grad[0];
            if (ai->requires_grad) {
                auto& g = Rec::grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * bi->data[i];
            }
            if (bi->requires_grad) {
                auto& g = Rec::grad(bi);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * ai->data[i];
            }
        });
    }
    return y;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
    if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be rank-2");
    if (ids.empty()) throw ContractError("embedding_lookup: empty id list");
    const std::size_t d = table.cols();
    for (std::size_t id : ids) {
        if (id >= table.rows()) {
            throw ContractError("embedding_lookup: id " + std::to_string(id) +
                                " out of range for table with " +
                                std::to_string(table.rows()) + " rows");
        }
    }
    Tensor y({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(y.values().data() + i * d, table.values().data() + ids[i] * d,
                    d * sizeof(double));
    }
    if (Rec::tracing({&table})) {
        auto ti = Rec::impl(table), yi = Rec::impl(y);
        Rec::record(y, [ti, yi, ids, d]() {
            auto& g = Rec::grad(ti);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    g[ids[i] * d + j] += yi->grad[i * d + j];
                }
            }
        });
    }
    return y;
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
    if (logits.rank() != 1) throw DimensionError("cross_entropy: logits must be rank-1");
    const std::size_t n = logits.size();
    if (target >= n) {
        throw LabelError("cross_entropy: target " + std::to_string(target) +
                         " out of range for " + std::to_string(n) + " classes");
    }
    const auto& xs = logits.values();
    double mx = xs[0];
    for (double v : xs) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : xs) z += std::exp(v - mx);
    const double loss = (mx + std::log(z)) - xs[target];
    Tensor y = Tensor::scalar(loss);
    check_finite(y.values(), "cross_entropy");
    if (Rec::tracing({&logits})) {
        auto xi = Rec::impl(logits), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, target, mx, z, n]() {
            auto& g = Rec::grad(xi);
            const double gy = yi->grad[0];
            for (std::size_t i = 0; i < n; ++i) {
                const double p = std::exp(xi->data[i] - mx) / z;
                g[i] += gy * (p - (i == target ? 1.0 : 0.0));
            }
        });
    }
    return y;
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
    if (p == 0.0) return x;
    const double keep = 1.0 - p;
    std::bernoulli_distribution dist(keep);
    std::vector<double> mask(x.size());
    for (double& m : mask) m = dist(rng) ? 1.0 / keep : 0.0;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y(i) = x(i) * mask[i];
    if (Rec::tracing({&x})) {
        auto xi = Rec::impl(x), yi = Rec::impl(y);
        Rec::record(y, [xi, yi, mask = std::move(mask)]() {
            auto& g = Rec::grad(xi);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * yi->grad[i];
        });
    }
    return y;
}

Tensor detach(const Tensor& x) {
    return Tensor::from_values(x.shape(), x.values(), false);
}

}  // namespace emodyn

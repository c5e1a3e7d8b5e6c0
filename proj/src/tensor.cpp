#include "geoflow/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

ImplPtr make_impl(Shape shape, std::vector<double> data, bool requires_grad)
{
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
    return impl;
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs)
{
    if (!grad_mode) {
        return false;
    }
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

// Builds an op result; records `backward` on the tape only when some input needs a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   const std::function<Tape::BackwardFn(detail::TensorImpl*)>& make_backward)
{
    const bool track = any_requires_grad(inputs);
    Tensor out(std::move(shape), std::move(data), track);
    if (track) {
        std::vector<std::uint64_t> parents;
        parents.reserve(inputs.size());
        for (const Tensor* t : inputs) {
            if (t->defined()) {
                parents.push_back(t->node_id());
            }
        }
        current_tape().record(op, out.impl(), std::move(parents), make_backward(out.impl().get()));
    }
    return out;
}

void require_rank2(const Tensor& t, const char* op)
{
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

std::size_t row_length(const Tensor& row, std::size_t n, const char* op)
{
    const bool ok = (row.rank() == 1 && row.shape()[0] == n) || (row.rank() == 2 && row.shape()[0] == 1 && row.shape()[1] == n);
    if (!ok) {
        throw DimensionError(std::string(op) + ": row operand " + shape_string(row.shape()) + " does not match width " +
                             std::to_string(n));
    }
    return n;
}

// Element-wise op whose derivative is a function of the input value.
template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& x, Forward forward, Derivative derivative)
{
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = forward(in[i]);
    }
    return make_result(op, x.shape(), std::move(out), {&x}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        return [xi, derivative](std::span<const double> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * derivative(xi->data[i]);
            }
        };
    });
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

} // namespace

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (const auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::span<double> detail::TensorImpl::grad_buffer()
{
    if (grad.empty()) {
        grad.assign(data.size(), 0.0);
    }
    return grad;
}

// ---- Tensor -----------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
{
    for (const auto extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_string(shape));
    }
    impl_ = make_impl(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad)
{
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::from(const Array2& array, bool requires_grad)
{
    return Tensor({array.rows, array.cols}, array.values, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::rows() const
{
    const auto& s = shape();
    return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const
{
    const auto& s = shape();
    return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const
{
    if (numel() != 1) {
        throw DimensionError("item() on a tensor of shape " + shape_string(shape()));
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Array2 Tensor::to_array2() const
{
    return Array2(rows(), rank() == 0 ? 1 : cols(), impl_->data);
}

std::uint64_t Tensor::node_id() const { return impl_->id; }

// ---- Tape -------------------------------------------------------------------------

void Tape::record(std::string op, std::shared_ptr<detail::TensorImpl> output, std::vector<std::uint64_t> parent_ids,
                  BackwardFn backward)
{
    entries_.push_back(Entry{std::move(op), std::move(output), std::move(parent_ids), std::move(backward)});
}

void Tape::backward(const Tensor& loss)
{
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss");
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss is not connected to any tensor that requires a gradient");
    }
    loss.impl()->grad_buffer()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!it->output->grad.empty()) {
            it->backward(it->output->grad);
        }
    }
    entries_.clear();
}

Tape& current_tape()
{
    thread_local Tape tape;
    return tape;
}

void backward(const Tensor& loss) { current_tape().backward(loss); }

bool grad_enabled() noexcept { return grad_mode; }

NoGradGuard::NoGradGuard() noexcept : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

// ---- ops --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b)
{
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    std::vector<double> c(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    // i-k-j order: each c[i, j] still accumulates over k in ascending order.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    return make_result("matmul", {m, n}, std::move(c), {&a, &b}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr ai = a.impl();
        ImplPtr bi = b.impl();
        return [ai, bi, m, k, n](std::span<const double> g) {
            if (ai->requires_grad) {
                // dA = dC * B^T
                auto ga = ai->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* brow = bi->data.data() + p * n;
                        const double* grow = g.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j) {
                            acc += grow[j] * brow[j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (bi->requires_grad) {
                // dB = A^T * dC
                auto gb = bi->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = ai->data[i * k + p];
                        double* gbrow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) {
                            gbrow[j] += aip * grow[j];
                        }
                    }
                }
            }
        };
    });
}

Tensor transpose(const Tensor& a)
{
    require_rank2(a, "transpose");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto in = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = in[i * n + j];
        }
    }
    return make_result("transpose", {n, m}, std::move(out), {&a}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr ai = a.impl();
        return [ai, m, n](std::span<const double> g) {
            auto ga = ai->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    ga[i * n + j] += g[j * m + i];
                }
            }
        };
    });
}

namespace {

Tensor add_scaled(const char* op, const Tensor& a, const Tensor& b, double sign)
{
    require_same_shape(a, b, op);
    std::vector<double> out(a.numel());
    const auto pa = a.data();
    const auto pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = pa[i] + sign * pb[i];
    }
    return make_result(op, a.shape(), std::move(out), {&a, &b}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr ai = a.impl();
        ImplPtr bi = b.impl();
        return [ai, bi, sign](std::span<const double> g) {
            if (ai->requires_grad) {
                auto ga = ai->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i];
                }
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gb[i] += sign * g[i];
                }
            }
        };
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled("add", a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled("sub", a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto pa = a.data();
    const auto pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = pa[i] * pb[i];
    }
    return make_result("mul", a.shape(), std::move(out), {&a, &b}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr ai = a.impl();
        ImplPtr bi = b.impl();
        return [ai, bi](std::span<const double> g) {
            if (ai->requires_grad) {
                auto ga = ai->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * bi->data[i];
                }
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gb[i] += g[i] * ai->data[i];
                }
            }
        };
    });
}

Tensor add_row(const Tensor& x, const Tensor& row)
{
    require_rank2(x, "add_row");
    const std::size_t m = x.shape()[0];
    const std::size_t n = row_length(row, x.shape()[1], "add_row");
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto r = row.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += r[j];
        }
    }
    return make_result("add_row", x.shape(), std::move(out), {&x, &row}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        ImplPtr ri = row.impl();
        return [xi, ri, m, n](std::span<const double> g) {
            if (xi->requires_grad) {
                auto gx = xi->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += g[i];
                }
            }
            if (ri->requires_grad) {
                auto gr = ri->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gr[j] += g[i * n + j];
                    }
                }
            }
        };
    });
}

Tensor mul_row(const Tensor& x, const Tensor& row)
{
    require_rank2(x, "mul_row");
    const std::size_t m = x.shape()[0];
    const std::size_t n = row_length(row, x.shape()[1], "mul_row");
    std::vector<double> out(m * n);
    const auto px = x.data();
    const auto r = row.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = px[i * n + j] * r[j];
        }
    }
    return make_result("mul_row", x.shape(), std::move(out), {&x, &row}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        ImplPtr ri = row.impl();
        return [xi, ri, m, n](std::span<const double> g) {
            if (xi->requires_grad) {
                auto gx = xi->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gx[i * n + j] += g[i * n + j] * ri->data[j];
                    }
                }
            }
            if (ri->requires_grad) {
                auto gr = ri->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gr[j] += g[i * n + j] * xi->data[i * n + j];
                    }
                }
            }
        };
    });
}

Tensor scale(const Tensor& x, double factor)
{
    return unary("scale", x, [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value)
{
    return unary("add_scalar", x, [value](double v) { return v + value; }, [](double) { return 1.0; });
}

Tensor square(const Tensor& x)
{
    return unary("square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

double gelu_scalar(double x) noexcept
{
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Tensor gelu(const Tensor& x)
{
    return unary("gelu", x, gelu_scalar, [](double v) {
        const double inner = kGeluC * (v + kGeluA * v * v * v);
        const double th = std::tanh(inner);
        const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner;
    });
}

Tensor silu(const Tensor& x)
{
    return unary(
        "silu", x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor softmax(const Tensor& x, int axis)
{
    const auto& shape = x.shape();
    const int rank = static_cast<int>(shape.size());
    const int ax = axis < 0 ? axis + rank : axis;
    if (rank == 0 || ax < 0 || ax >= rank) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (int i = 0; i < ax; ++i) {
        outer *= shape[static_cast<std::size_t>(i)];
    }
    for (int i = ax + 1; i < rank; ++i) {
        inner *= shape[static_cast<std::size_t>(i)];
    }
    const std::size_t len = shape[static_cast<std::size_t>(ax)];
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double peak = in[base];
            for (std::size_t k = 1; k < len; ++k) {
                peak = std::max(peak, in[base + k * inner]);
            }
            double total = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(in[base + k * inner] - peak);
                out[base + k * inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < len; ++k) {
                out[base + k * inner] /= total;
            }
        }
    }
    return make_result("softmax", shape, std::move(out), {&x}, [&](detail::TensorImpl* yi) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        return [xi, yi, outer, inner, len](std::span<const double> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * len * inner + i;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < len; ++k) {
                        dot += g[base + k * inner] * yi->data[base + k * inner];
                    }
                    for (std::size_t k = 0; k < len; ++k) {
                        const std::size_t idx = base + k * inner;
                        gx[idx] += yi->data[idx] * (g[idx] - dot);
                    }
                }
            }
        };
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    if (x.rank() == 0) {
        throw DimensionError("layer_norm: scalar input");
    }
    const std::size_t n = x.cols();
    const std::size_t rows = x.numel() / n;
    const bool affine = gamma.defined();
    if (affine) {
        row_length(gamma, n, "layer_norm gamma");
        row_length(beta, n, "layer_norm beta");
    }
    std::vector<double> normalized(x.numel());
    std::vector<double> inv_std(rows);
    const auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += row[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            normalized[r * n + j] = (row[j] - mu) * inv_std[r];
        }
    }
    std::vector<double> out = normalized;
    if (affine) {
        const auto g = gamma.data();
        const auto b = beta.data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                out[r * n + j] = normalized[r * n + j] * g[j] + b[j];
            }
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        ImplPtr gi = affine ? gamma.impl() : nullptr;
        ImplPtr bi = affine ? beta.impl() : nullptr;
        return [xi, gi, bi, rows, n, xhat = std::move(normalized), inv = std::move(inv_std)](std::span<const double> g) {
            std::vector<double> dxhat(n);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = g.data() + r * n;
                const double* xrow = xhat.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) {
                    dxhat[j] = gi ? grow[j] * gi->data[j] : grow[j];
                }
                if (gi && gi->requires_grad) {
                    auto gg = gi->grad_buffer();
                    for (std::size_t j = 0; j < n; ++j) {
                        gg[j] += grow[j] * xrow[j];
                    }
                }
                if (bi && bi->requires_grad) {
                    auto gb = bi->grad_buffer();
                    for (std::size_t j = 0; j < n; ++j) {
                        gb[j] += grow[j];
                    }
                }
                if (xi->requires_grad) {
                    double mean_d = 0.0;
                    double mean_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xrow[j];
                    }
                    mean_d /= static_cast<double>(n);
                    mean_dx /= static_cast<double>(n);
                    auto gx = xi->grad_buffer();
                    for (std::size_t j = 0; j < n; ++j) {
                        gx[r * n + j] += inv[r] * (dxhat[j] - mean_d - xrow[j] * mean_dx);
                    }
                }
            }
        };
    });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count)
{
    require_rank2(x, "slice_cols");
    const std::size_t m = x.shape()[0];
    const std::size_t n = x.shape()[1];
    if (count == 0 || start + count > n) {
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                             ") out of range for " + shape_string(x.shape()));
    }
    std::vector<double> out(m * count);
    const auto in = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(in.data() + i * n + start, count, out.data() + i * count);
    }
    return make_result("slice_cols", {m, count}, std::move(out), {&x}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        return [xi, m, n, start, count](std::span<const double> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < count; ++j) {
                    gx[i * n + start + j] += g[i * count + j];
                }
            }
        };
    });
}

Tensor concat_cols(std::span<const Tensor> parts)
{
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row counts differ");
        }
        total += p.cols();
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        const auto in = p.data();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(in.data() + i * w, w, out.data() + i * total + offset);
        }
        offset += w;
    }
    const bool track = grad_mode && std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
    Tensor result({m, total}, std::move(out), track);
    if (track) {
        std::vector<ImplPtr> impls;
        std::vector<std::uint64_t> parents;
        for (const auto& p : parts) {
            impls.push_back(p.impl());
            parents.push_back(p.node_id());
        }
        current_tape().record("concat_cols", result.impl(), std::move(parents), [impls, m, total](std::span<const double> g) {
            std::size_t off = 0;
            for (const auto& pi : impls) {
                const std::size_t w = pi->shape[1];
                if (pi->requires_grad) {
                    auto gp = pi->grad_buffer();
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < w; ++j) {
                            gp[i * w + j] += g[i * total + off + j];
                        }
                    }
                }
                off += w;
            }
        });
    }
    return result;
}

Tensor sum(const Tensor& x)
{
    double total = 0.0;
    for (const double v : x.data()) {
        total += v;
    }
    return make_result("sum", {}, {total}, {&x}, [&](detail::TensorImpl*) -> Tape::BackwardFn {
        ImplPtr xi = x.impl();
        return [xi](std::span<const double> g) {
            auto gx = xi->grad_buffer();
            for (auto& v : gx) {
                v += g[0];
            }
        };
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

// ---- finite differences -----------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h)
{
    if (!(h > 0.0)) {
        throw ParameterError("finite_diff_check: step h must be positive");
    }
    Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
    std::vector<Tensor> params{probe};
    return finite_diff_check_params([&]() { return f(probe); }, params, h);
}

double finite_diff_check_params(const std::function<Tensor()>& f, std::span<Tensor> params, double h,
                                std::size_t max_coords_per_tensor)
{
    if (!(h > 0.0)) {
        throw ParameterError("finite_diff_check: step h must be positive");
    }
    for (auto& p : params) {
        p.zero_grad();
    }
    Tensor loss = f();
    backward(loss);

    double worst = 0.0;
    NoGradGuard no_grad;
    for (auto& p : params) {
        const std::vector<double> analytic =
            p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end()) : std::vector<double>(p.numel(), 0.0);
        const std::size_t n = p.numel();
        const std::size_t stride =
            (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) ? 1 : (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = f().item();
            values[i] = saved - h;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
            worst = std::max(worst, err);
        }
        p.zero_grad();
    }
    return worst;
}

} // namespace geoflow

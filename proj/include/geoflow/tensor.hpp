#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geoflow/array2.hpp"

namespace geoflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until the first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;

    // Zero-filled gradient buffer of matching size, allocated on first use.
    std::span<double> grad_buffer();
};

} // namespace detail

// Dense row-major f64 array. Copies share storage; values are not modified after
// creation except for parameters updated in place by an optimizer.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(const Array2& array, bool requires_grad = false);

    [[nodiscard]] bool defined() const noexcept { return impl_ != nullptr; }
    [[nodiscard]] const Shape& shape() const;
    [[nodiscard]] std::size_t rank() const { return shape().size(); }
    [[nodiscard]] std::size_t numel() const;
    // Leading extent for rank-2 tensors; 1 for rank 0/1.
    [[nodiscard]] std::size_t rows() const;
    // Last extent; 1 for rank 0.
    [[nodiscard]] std::size_t cols() const;

    [[nodiscard]] std::span<const double> data() const;
    [[nodiscard]] std::span<double> mutable_data();
    [[nodiscard]] double item() const;
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return data()[i * cols() + j]; }

    [[nodiscard]] bool requires_grad() const;
    void set_requires_grad(bool flag);
    [[nodiscard]] bool has_grad() const;
    // Empty span when no gradient has been accumulated.
    [[nodiscard]] std::span<const double> grad() const;
    void zero_grad();

    // Independent copy that is not connected to any tape.
    [[nodiscard]] Tensor detach() const;
    [[nodiscard]] Array2 to_array2() const;
    [[nodiscard]] std::uint64_t node_id() const;

    [[nodiscard]] const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of differentiable operations. Entries are appended as ops execute,
// so every entry's parents were produced earlier (or are leaves).
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    struct Entry {
        std::string op;
        std::shared_ptr<detail::TensorImpl> output;
        std::vector<std::uint64_t> parent_ids;
        BackwardFn backward;
    };

    void record(std::string op, std::shared_ptr<detail::TensorImpl> output, std::vector<std::uint64_t> parent_ids,
                BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1, propagates in reverse recording order, then clears the tape.
    // Gradients accumulate (sum) into every requires_grad tensor reached.
    void backward(const Tensor& loss);

    void clear() noexcept { entries_.clear(); }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
    std::vector<Entry> entries_;
};

// Tape of the calling thread.
Tape& current_tape();
void backward(const Tensor& loss);

[[nodiscard]] bool grad_enabled() noexcept;

// Suspends tape recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() noexcept;
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- differentiable operations ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[m, n] + row[n] broadcast over rows; row may have shape [n] or [1, n].
Tensor add_row(const Tensor& x, const Tensor& row);
// x[m, n] * row[n] broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);
// Max-subtracted softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);
// Normalizes over the last axis with biased variance. gamma/beta may be undefined
// for a non-affine norm.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// mean((a - b)^2) over all entries.
Tensor mse(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Scalar evaluations shared by the forward kernels and the tests.
double gelu_scalar(double x) noexcept;

// ---- finite-difference oracle -----------------------------------------------------

// Max over coordinates of |central difference - autodiff| / max(1, |autodiff|) for a
// scalar function of one tensor.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// Same measure for a scalar function of several parameter tensors that are perturbed in
// place. `max_coords_per_tensor` > 0 checks an evenly strided subset of each tensor.
double finite_diff_check_params(const std::function<Tensor()>& f, std::span<Tensor> params, double h = 1e-5,
                                std::size_t max_coords_per_tensor = 0);

} // namespace geoflow

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "t2v/rng.hpp"

namespace t2v {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// One recorded node of the differentiation graph. The graph doubles as the
// tape: backward() walks it once in reverse topological order and each
// backward_fn accumulates into the parents' grad buffers (sum rule for
// shared inputs).
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::uint64_t visit_mark = 0;  // backward traversal epoch stamp
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Value-semantics handle onto a graph node. All tensors used by the model are
// rank-2 (scalars are [1x1], row vectors [1xn]).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    std::size_t ndim() const { return n_->shape.size(); }
    std::size_t size() const { return n_->values.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i, std::size_t j) { return n_->values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return n_->values[i * cols() + j]; }
    double item() const;

    std::vector<double>& values() { return n_->values; }
    const std::vector<double>& values() const { return n_->values; }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    bool has_grad() const { return !n_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { n_->grad.clear(); }

    const std::shared_ptr<TensorNode>& node() const { return n_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
    std::shared_ptr<TensorNode> n_;

    friend Tensor make_op(Shape shape, std::vector<double> values,
                          std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward_fn);
};

// Thread-local switch: when disabled, ops produce plain values (no tape).
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b, double s = 1.0);  // s * (a * b^T)
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + row-broadcast b
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// adds row [1xn] to every row of x [mxn]
Tensor add_row_broadcast(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& a, double c);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp_max(const Tensor& a, double cap);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor gelu(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
Tensor sum_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor rowwise_dot(const Tensor& a, const Tensor& b);  // [mx1]
Tensor take_diag(const Tensor& x);                     // [1xn] from [nxn]
Tensor zero_diag(const Tensor& x);
Tensor stack_scalars(const std::vector<Tensor>& entries, std::size_t rows, std::size_t cols);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// ---- backward & checking --------------------------------------------------

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// the scalar loss. Each node is visited exactly once.
void backward(const Tensor& loss);

struct GradCheckReport {
    bool passed = false;
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coords_checked = 0;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Central-difference check of d(loss_fn)/d(params) against backward().
// Differences at or below atol count as roundoff noise, not error.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params,
                           double h, double tol, double atol = 1e-8);

}  // namespace t2v

// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

/// Define-by-run reverse-mode differentiation over dense row-major tensors.
///
/// Every op returns a fresh Tensor; when any input requires a gradient the
/// result carries a provenance node pointing back at its inputs. backward()
/// walks those nodes in reverse topological order, accumulating (never
/// overwriting) into input gradients, then drops the nodes so the graph can
/// be rebuilt on the next iteration.
namespace rigsplat::ad {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TensorImpl;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
    std::vector<std::int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    [[nodiscard]] bool defined() const { return impl_ != nullptr; }
    [[nodiscard]] const std::vector<std::int64_t>& shape() const { return impl_->shape; }
    [[nodiscard]] std::int64_t numel() const { return static_cast<std::int64_t>(impl_->value.size()); }
    [[nodiscard]] std::int64_t rows() const;
    [[nodiscard]] std::int64_t cols() const;

    [[nodiscard]] std::span<double> values() { return impl_->value; }
    [[nodiscard]] std::span<const double> values() const { return impl_->value; }
    [[nodiscard]] double item() const;

    /// Gradient buffer; empty until something has been accumulated.
    [[nodiscard]] std::span<const double> grad() const { return impl_->grad; }
    [[nodiscard]] std::span<double> mutable_grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    [[nodiscard]] bool has_grad() const { return impl_->grad.size() == impl_->value.size(); }
    void zero_grad() { impl_->grad.assign(impl_->value.size(), 0.0); }

    [[nodiscard]] bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }
    [[nodiscard]] bool has_node() const { return impl_->node != nullptr; }

    [[nodiscard]] const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// (n x k) * (k x m).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same-shape sum, or a row vector b of length cols(a) broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
/// Same-shape elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
/// Column-wise concatenation of 2-D tensors with equal row counts.
Tensor concat(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Populates gradients for everything reachable from a scalar loss and
/// releases the recorded graph.
void backward(const Tensor& loss);

}  // namespace rigsplat::ad

// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

#include "rigsplat/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace rigsplat::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

constexpr std::int64_t kParallelThreshold = 1 << 14;

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << "]";
    return out.str();
}

std::shared_ptr<TensorImpl> make_result(std::vector<std::int64_t> shape,
                                        std::initializer_list<const Tensor*> inputs) {
    auto out = std::make_shared<TensorImpl>();
    const auto n = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
    out->shape = std::move(shape);
    out->value.assign(static_cast<std::size_t>(n), 0.0);
    for (const Tensor* t : inputs) out->requires_grad = out->requires_grad || t->requires_grad();
    return out;
}

void attach(const std::shared_ptr<TensorImpl>& out, std::vector<std::shared_ptr<TensorImpl>> inputs,
            std::function<void(TensorImpl&)> fn) {
    if (!out->requires_grad) return;
    auto node = std::make_shared<Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
    out->node = std::move(node);
}

template <typename F>
Tensor unary(const Tensor& a, F&& fwd, std::function<double(double x, double y)> dydx) {
    auto out = make_result(a.shape(), {&a});
    const auto in = a.values();
    const auto n = static_cast<std::int64_t>(in.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::int64_t i = 0; i < n; ++i) out->value[i] = fwd(in[i]);
    auto ai = a.impl();
    attach(out, {ai}, [ai, dydx](TensorImpl& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const auto m = static_cast<std::int64_t>(o.value.size());
#pragma omp parallel for schedule(static) if (m > kParallelThreshold)
        for (std::int64_t i = 0; i < m; ++i) ai->grad[i] += o.grad[i] * dydx(ai->value[i], o.value[i]);
    });
    return Tensor(out);
}

void require_2d(const Tensor& t, const char* op) {
    if (t.shape().size() != 2)
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    const auto n = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
    impl->shape = std::move(shape);
    impl->value.assign(static_cast<std::size_t>(n), 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> values, bool requires_grad) {
    const auto n = std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
    if (n != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor data length does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

std::int64_t Tensor::rows() const {
    return shape().empty() ? 1 : shape()[0];
}

std::int64_t Tensor::cols() const {
    return shape().size() < 2 ? 1 : shape()[1];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on a non-scalar tensor " + shape_str(shape()));
    return impl_->value[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const auto n = a.rows(), k = a.cols(), m = b.cols();
    auto out = make_result({n, m}, {&a, &b});
    Map(out->value.data(), n, m).noalias() =
        ConstMap(a.values().data(), n, k) * ConstMap(b.values().data(), k, m);
    auto ai = a.impl(), bi = b.impl();
    attach(out, {ai, bi}, [ai, bi, n, k, m](TensorImpl& o) {
        ConstMap dy(o.grad.data(), n, m);
        if (ai->requires_grad) {
            ai->ensure_grad();
            Map(ai->grad.data(), n, k).noalias() += dy * ConstMap(bi->value.data(), k, m).transpose();
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            Map(bi->grad.data(), k, m).noalias() += ConstMap(ai->value.data(), n, k).transpose() * dy;
        }
    });
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    auto ai = a.impl(), bi = b.impl();
    if (a.shape() == b.shape()) {
        auto out = make_result(a.shape(), {&a, &b});
        for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = ai->value[i] + bi->value[i];
        attach(out, {ai, bi}, [ai, bi](TensorImpl& o) {
            for (auto* t : {ai.get(), bi.get()}) {
                if (!t->requires_grad) continue;
                t->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) t->grad[i] += o.grad[i];
            }
        });
        return Tensor(out);
    }
    // row-vector broadcast
    require_2d(a, "add");
    const auto n = a.rows(), m = a.cols();
    const bool row_vector = (b.shape().size() == 1 && b.shape()[0] == m) ||
                            (b.shape().size() == 2 && b.shape()[0] == 1 && b.shape()[1] == m);
    if (!row_vector)
        throw ShapeError("add: cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
    auto out = make_result(a.shape(), {&a, &b});
    Map(out->value.data(), n, m) = ConstMap(ai->value.data(), n, m).rowwise() +
                                   ConstMap(bi->value.data(), 1, m).row(0);
    attach(out, {ai, bi}, [ai, bi, n, m](TensorImpl& o) {
        ConstMap dy(o.grad.data(), n, m);
        if (ai->requires_grad) {
            ai->ensure_grad();
            Map(ai->grad.data(), n, m) += dy;
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            Map(bi->grad.data(), 1, m) += dy.colwise().sum();
        }
    });
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto ai = a.impl(), bi = b.impl();
    auto out = make_result(a.shape(), {&a, &b});
    const auto n = static_cast<std::int64_t>(out->value.size());
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::int64_t i = 0; i < n; ++i) out->value[i] = ai->value[i] * bi->value[i];
    attach(out, {ai, bi}, [ai, bi](TensorImpl& o) {
        const auto m = static_cast<std::int64_t>(o.grad.size());
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::int64_t i = 0; i < m; ++i) ai->grad[i] += o.grad[i] * bi->value[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::int64_t i = 0; i < m; ++i) bi->grad[i] += o.grad[i] * ai->value[i];
        }
    });
    return Tensor(out);
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; },
                 [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& a) {
    return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const auto n = parts[0].rows();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_2d(p, "concat");
        if (p.rows() != n) throw ShapeError("concat: row counts differ");
        total += p.cols();
    }
    auto out = std::make_shared<TensorImpl>();
    out->shape = {n, total};
    out->value.assign(static_cast<std::size_t>(n * total), 0.0);
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        out->requires_grad = out->requires_grad || p.requires_grad();
        Map(out->value.data(), n, total).middleCols(off, p.cols()) = ConstMap(p.values().data(), n, p.cols());
        inputs.push_back(p.impl());
        offsets.push_back(off);
        off += p.cols();
    }
    attach(out, inputs, [inputs, offsets, n, total](TensorImpl& o) {
        ConstMap dy(o.grad.data(), n, total);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto& t = *inputs[i];
            if (!t.requires_grad) continue;
            t.ensure_grad();
            const auto c = t.shape.size() < 2 ? 1 : t.shape[1];
            Map(t.grad.data(), n, c) += dy.middleCols(offsets[i], c);
        }
    });
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    auto ai = a.impl();
    auto out = make_result({}, {&a});
    out->value[0] = std::accumulate(ai->value.begin(), ai->value.end(), 0.0);
    attach(out, {ai}, [ai](TensorImpl& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (auto& g : ai->grad) g += o.grad[0];
    });
    return Tensor(out);
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(std::max<std::int64_t>(1, a.numel()));
    auto ai = a.impl();
    auto out = make_result({}, {&a});
    out->value[0] = std::accumulate(ai->value.begin(), ai->value.end(), 0.0) * inv;
    attach(out, {ai}, [ai, inv](TensorImpl& o) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (auto& g : ai->grad) g += o.grad[0] * inv;
    });
    return Tensor(out);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward: loss must be a scalar tensor");
    auto root = loss.impl();
    if (!root->requires_grad) return;

    // reverse topological order via iterative post-order DFS
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        if (t->node && next < t->node->inputs.size()) {
            TensorImpl* child = t->node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(t);
        stack.pop_back();
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (!t->node) continue;
        t->ensure_grad();
        t->node->backward(*t);
    }
    for (TensorImpl* t : order) t->node.reset();
}

}  // namespace rigsplat::ad

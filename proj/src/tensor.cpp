#include "rrr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rrr {

namespace {

Index shape_numel(const Shape& s) {
    Index n = 1;
    for (Index e : s) n *= e;
    return n;
}

void check_shape(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (Index e : s)
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
}

[[noreturn]] void bad_shapes(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

enum class Bcast { same, scalar_a, scalar_b, row_a, row_b, col_a, col_b };

Bcast classify(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return Bcast::same;
    if (shape_numel(b) == 1) return Bcast::scalar_b;
    if (shape_numel(a) == 1) return Bcast::scalar_a;
    if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Bcast::row_b;
    if (b.size() == 2 && a.size() == 1 && a[0] == b[1]) return Bcast::row_a;
    if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) return Bcast::col_b;
    if (b.size() == 2 && a.size() == 2 && a[0] == b[0] && a[1] == 1) return Bcast::col_a;
    bad_shapes(op, a, b);
}

template <typename F>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f) {
    switch (classify(op, a.shape(), b.shape())) {
        case Bcast::same: {
            Tensor out(a.shape());
            out.array() = f(a.array(), b.array());
            return out;
        }
        case Bcast::scalar_b: {
            Tensor out(a.shape());
            out.array() = f(a.array(), b.item());
            return out;
        }
        case Bcast::scalar_a: {
            Tensor out(b.shape());
            out.array() = f(a.item(), b.array());
            return out;
        }
        case Bcast::row_b: {
            Tensor out(a.shape());
            const Index n = a.rows();
            for (Index i = 0; i < n; ++i)
                out.matrix().row(i).array() = f(a.matrix().row(i).array(), b.array().transpose());
            return out;
        }
        case Bcast::row_a: {
            Tensor out(b.shape());
            const Index n = b.rows();
            for (Index i = 0; i < n; ++i)
                out.matrix().row(i).array() = f(a.array().transpose(), b.matrix().row(i).array());
            return out;
        }
        case Bcast::col_b: {
            Tensor out(a.shape());
            const Index n = a.rows();
            for (Index i = 0; i < n; ++i)
                out.matrix().row(i).array() = f(a.matrix().row(i).array(), b[i]);
            return out;
        }
        case Bcast::col_a: {
            Tensor out(b.shape());
            const Index n = b.rows();
            for (Index i = 0; i < n; ++i)
                out.matrix().row(i).array() = f(a[i], b.matrix().row(i).array());
            return out;
        }
    }
    bad_shapes(op, a.shape(), b.shape());
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Eigen::ArrayXd::Zero(shape_numel(shape_));
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::vector<double>(values)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    check_shape(shape_);
    if (shape_numel(shape_) != static_cast<Index>(values.size()))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
    data_ = Eigen::Map<const Eigen::ArrayXd>(values.data(), values.size());
    if (!all_finite()) throw ValueError("tensor literal contains non-finite values");
}

Tensor Tensor::scalar(double v) {
    Tensor t(Shape{1});
    t.data_[0] = v;
    return t;
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
}

Index Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }
Index Tensor::cols() const { return rank() == 2 ? shape_[1] : numel(); }

double Tensor::item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

Eigen::Map<const MatrixRM> Tensor::matrix() const {
    if (rank() > 2) throw ShapeError("matrix view of rank-" + std::to_string(rank()) + " tensor");
    return {data_.data(), rows(), cols()};
}

Eigen::Map<MatrixRM> Tensor::matrix() {
    if (rank() > 2) throw ShapeError("matrix view of rank-" + std::to_string(rank()) + " tensor");
    return {data_.data(), rows(), cols()};
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary("add", a, b, [](const auto& x, const auto& y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return binary("sub", a, b, [](const auto& x, const auto& y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return binary("mul", a, b, [](const auto& x, const auto& y) { return x * y; });
}
Tensor div(const Tensor& a, const Tensor& b) {
    return binary("div", a, b, [](const auto& x, const auto& y) { return x / y; });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.rank() != 2 || b.rank() != 2) bad_shapes("matmul", a.shape(), b.shape());
    const Index am = trans_a ? a.cols() : a.rows();
    const Index ak = trans_a ? a.rows() : a.cols();
    const Index bk = trans_b ? b.cols() : b.rows();
    const Index bn = trans_b ? b.rows() : b.cols();
    if (ak != bk) bad_shapes("matmul", a.shape(), b.shape());
    Tensor out(Shape{am, bn});
    if (trans_a && trans_b)
        out.matrix().noalias() = a.matrix().transpose() * b.matrix().transpose();
    else if (trans_a)
        out.matrix().noalias() = a.matrix().transpose() * b.matrix();
    else if (trans_b)
        out.matrix().noalias() = a.matrix() * b.matrix().transpose();
    else
        out.matrix().noalias() = a.matrix() * b.matrix();
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = x.array().max(0.0);
    return out;
}
Tensor exp(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = x.array().exp();
    return out;
}
Tensor log(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = x.array().log();
    return out;
}
Tensor square(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = x.array().square();
    return out;
}
Tensor abs(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = x.array().abs();
    return out;
}
Tensor scale(const Tensor& x, double s) {
    Tensor out(x.shape());
    out.array() = x.array() * s;
    return out;
}
Tensor sign(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = (x.array() > 0.0).cast<double>() - (x.array() < 0.0).cast<double>();
    return out;
}
Tensor step(const Tensor& x) {
    Tensor out(x.shape());
    out.array() = (x.array() > 0.0).cast<double>();
    return out;
}
Tensor clip(const Tensor& x, double lo, double hi) {
    Tensor out(x.shape());
    out.array() = x.array().min(hi).max(lo);
    return out;
}

Tensor sum(const Tensor& x, int axis) {
    if (axis == -1) return Tensor::scalar(x.array().sum());
    if (x.rank() != 2) throw ShapeError("sum over axis " + std::to_string(axis) +
                                        " of rank-" + std::to_string(x.rank()) + " tensor");
    if (axis == 0) {
        Tensor out(Shape{x.cols()});
        out.array() = x.matrix().colwise().sum().array().transpose();
        return out;
    }
    if (axis == 1) {
        Tensor out(Shape{x.rows(), 1});
        out.array() = x.matrix().rowwise().sum().array();
        return out;
    }
    throw ShapeError("sum: unsupported axis " + std::to_string(axis));
}

Tensor max_over(const Tensor& x, int axis) {
    if (axis == -1) return Tensor::scalar(x.array().maxCoeff());
    if (x.rank() != 2) throw ShapeError("max over axis " + std::to_string(axis) +
                                        " of rank-" + std::to_string(x.rank()) + " tensor");
    if (axis == 0) {
        Tensor out(Shape{x.cols()});
        out.array() = x.matrix().colwise().maxCoeff().array().transpose();
        return out;
    }
    if (axis == 1) {
        Tensor out(Shape{x.rows(), 1});
        out.array() = x.matrix().rowwise().maxCoeff().array();
        return out;
    }
    throw ShapeError("max: unsupported axis " + std::to_string(axis));
}

Tensor max_mask(const Tensor& x, int axis) {
    Tensor out(x.shape());
    if (axis == -1) {
        Index best = 0;
        x.array().maxCoeff(&best);
        out[best] = 1.0;
        return out;
    }
    if (x.rank() != 2) throw ShapeError("max_mask needs a rank-2 tensor for axis " + std::to_string(axis));
    if (axis == 1) {
        for (Index i = 0; i < x.rows(); ++i) {
            Index best = 0;
            x.matrix().row(i).maxCoeff(&best);
            out.at(i, best) = 1.0;
        }
        return out;
    }
    if (axis == 0) {
        for (Index j = 0; j < x.cols(); ++j) {
            Index best = 0;
            x.matrix().col(j).maxCoeff(&best);
            out.at(best, j) = 1.0;
        }
        return out;
    }
    throw ShapeError("max_mask: unsupported axis " + std::to_string(axis));
}

std::vector<Index> argmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("argmax_rows needs rank-2, got " + shape_str(x.shape()));
    std::vector<Index> out(static_cast<size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
        Index best = 0;
        x.matrix().row(i).maxCoeff(&best);
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

Tensor one_hot(const std::vector<Index>& labels, Index num_classes) {
    Tensor out(Shape{static_cast<Index>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValueError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        out.at(static_cast<Index>(i), labels[i]) = 1.0;
    }
    return out;
}

double max_abs(const Tensor& x) { return x.numel() == 0 ? 0.0 : x.array().abs().maxCoeff(); }

bool allclose(const Tensor& a, const Tensor& b, double atol) {
    if (!a.same_shape(b)) return false;
    return ((a.array() - b.array()).abs() <= atol).all();
}

}  // namespace rrr

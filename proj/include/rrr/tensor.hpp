#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

std::string shape_str(const Shape& s);

/// Dense row-major array of doubles with an explicit shape.
/// Rank 1 tensors are vectors, rank 2 are matrices; a scalar has shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::initializer_list<double> values);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index numel() const { return static_cast<Index>(data_.size()); }
    bool is_scalar() const { return numel() == 1; }
    bool empty() const { return data_.size() == 0; }

    Index rows() const;
    Index cols() const;

    double item() const;
    double& operator[](Index i) { return data_[i]; }
    double operator[](Index i) const { return data_[i]; }
    double& at(Index r, Index c) { return data_[r * cols() + c]; }
    double at(Index r, Index c) const { return data_[r * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    Eigen::Map<Eigen::ArrayXd> array() { return {data_.data(), data_.size()}; }
    Eigen::Map<const Eigen::ArrayXd> array() const { return {data_.data(), data_.size()}; }
    /// Rank-2 view; a rank-1 tensor maps to a single row.
    Eigen::Map<const MatrixRM> matrix() const;
    Eigen::Map<MatrixRM> matrix();

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const { return data_.allFinite(); }

private:
    Shape shape_;
    Eigen::ArrayXd data_;
};

// Elementwise binary ops broadcast a rank-1 [K] operand across the rows of an
// [N,K] operand, an [N,1] operand across its columns, and scalars everywhere.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor scale(const Tensor& x, double s);
/// sign(x) with sign(0) = 0.
Tensor sign(const Tensor& x);
/// 1 where x > 0, else 0 (relu subgradient; 0 at x = 0).
Tensor step(const Tensor& x);
Tensor clip(const Tensor& x, double lo, double hi);

/// axis -1 sums everything to a scalar; axis 0 of [N,K] gives [K];
/// axis 1 of [N,K] gives [N,1].
Tensor sum(const Tensor& x, int axis = -1);
Tensor max_over(const Tensor& x, int axis);
/// One-hot mask of the first argmax along `axis` (same shape as x).
Tensor max_mask(const Tensor& x, int axis);

/// Row index of the max entry of each row of a rank-2 tensor (first on ties).
std::vector<Index> argmax_rows(const Tensor& x);
Tensor one_hot(const std::vector<Index>& labels, Index num_classes);

double max_abs(const Tensor& x);
bool allclose(const Tensor& a, const Tensor& b, double atol = 1e-12);

}  // namespace rrr

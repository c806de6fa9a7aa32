#include "rrr/tensor.hpp"

#include <doctest.h>

using namespace rrr;

TEST_CASE("tensor shape and data invariants") {
    Tensor t(Shape{2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_THROWS_AS(Tensor(Shape{2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{1}, {std::nan("")}), ValueError);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("elementwise ops and broadcasting") {
    Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    Tensor row(Shape{2}, {10, 20});
    Tensor col(Shape{2, 1}, {1, 2});
    Tensor s = Tensor::scalar(2.0);

    Tensor r = add(a, row);
    CHECK(r.at(0, 0) == 11);
    CHECK(r.at(1, 1) == 24);
    r = mul(a, col);
    CHECK(r.at(0, 1) == 2);
    CHECK(r.at(1, 0) == 6);
    r = div(a, s);
    CHECK(r.at(1, 1) == 2.0);
    r = sub(row, a);  // mirrored broadcast
    CHECK(r.at(1, 0) == 7);
    CHECK_THROWS_AS(add(a, Tensor(Shape{3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("matmul including transposed forms") {
    Tensor a = Tensor::ones(Shape{2, 3});
    Tensor b = Tensor::ones(Shape{3, 1});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 3.0);
    CHECK(c[1] == 3.0);

    Tensor m(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor n(Shape{2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor mt_n = matmul(m, n, false, true);  // (2x3)(3x2)
    CHECK(mt_n.shape() == Shape{2, 2});
    CHECK(mt_n.at(0, 0) == 1.0);
    CHECK(mt_n.at(1, 1) == 5.0);
    CHECK_THROWS_AS(matmul(m, m), ShapeError);
}

TEST_CASE("reductions, max and masks") {
    Tensor a(Shape{2, 3}, {1, 5, 2, 4, 4, 0});
    CHECK(sum(a).item() == 16.0);
    CHECK(sum(a, 0).shape() == Shape{3});
    CHECK(sum(a, 0)[1] == 9.0);
    CHECK(sum(a, 1).shape() == Shape{2, 1});
    CHECK(sum(a, 1)[1] == 8.0);
    CHECK(max_over(a, 1)[0] == 5.0);
    Tensor mask = max_mask(a, 1);  // first argmax on ties
    CHECK(mask.at(0, 1) == 1.0);
    CHECK(mask.at(1, 0) == 1.0);
    CHECK(mask.at(1, 1) == 0.0);
    CHECK(argmax_rows(a) == std::vector<Index>{1, 0});
}

TEST_CASE("sign and step treat zero as zero") {
    Tensor x(Shape{3}, {-1.5, 0.0, 2.0});
    CHECK(sign(x)[0] == -1.0);
    CHECK(sign(x)[1] == 0.0);
    CHECK(sign(x)[2] == 1.0);
    CHECK(step(x)[1] == 0.0);
    CHECK(step(x)[2] == 1.0);
}

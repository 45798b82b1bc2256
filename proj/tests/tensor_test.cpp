#include <stdexcept>

#include "doctest.h"
#include "qgen/tensor.hpp"

using qgen::Tensor;

TEST_CASE("tensor construction and accessors") {
    Tensor m({2, 3});
    CHECK(m.size() == 6);
    CHECK(m.ndim() == 2);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    m.at(1, 2) = 7.0;
    CHECK(m[5] == 7.0);
    CHECK(m.row_ptr(1)[2] == 7.0);
    CHECK(m.shape_str() == "[2,3]");

    Tensor s = Tensor::scalar(2.5);
    CHECK(s.is_scalar());
    CHECK(s.scalar_value() == 2.5);

    Tensor v = Tensor::vec({1.0, 2.0});
    CHECK(v.ndim() == 1);
    CHECK(v.size() == 2);
    CHECK_FALSE(v.is_scalar());

    CHECK_THROWS_AS(Tensor({-1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(v.cols(), std::logic_error);
}

TEST_CASE("shape mismatch errors name the operation and shapes") {
    Tensor a({2});
    Tensor b({3});
    try {
        qgen::require_same_shape(a, b, "add");
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2]") != std::string::npos);
        CHECK(msg.find("[3]") != std::string::npos);
    }
}

TEST_CASE("fill and zero initialization") {
    Tensor t({4});
    for (int i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);
    t.fill(1.5);
    for (int i = 0; i < t.size(); ++i) CHECK(t[i] == 1.5);
}

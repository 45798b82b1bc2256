#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qgen {

// Dense double tensor, row-major. Rank is 1 or 2 everywhere in this codebase;
// scalars are represented as shape {1}.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        v_.assign(n, 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.v_[0] = v;
        return t;
    }

    static Tensor vec(std::vector<double> values) {
        Tensor t;
        t.shape_ = {static_cast<int>(values.size())};
        t.v_ = std::move(values);
        return t;
    }

    int size() const { return static_cast<int>(v_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }

    int rows() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols() const {
        if (ndim() != 2) throw std::logic_error("Tensor::cols on non-matrix");
        return shape_[1];
    }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }

    double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * cols() + c]; }

    double* row_ptr(int r) { return data() + static_cast<std::size_t>(r) * cols(); }
    const double* row_ptr(int r) const { return data() + static_cast<std::size_t>(r) * cols(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool is_scalar() const { return size() == 1 && ndim() <= 1; }

    double scalar_value() const {
        if (!is_scalar()) throw std::logic_error("Tensor::scalar_value on non-scalar");
        return v_[0];
    }

    void fill(double x) { v_.assign(v_.size(), x); }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<double> v_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace qgen

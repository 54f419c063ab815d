#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "auscsed/error.hpp"

namespace auscsed {

/// Dense row-major tensor of doubles, rank 1..4. All model math runs in
/// 64-bit; weight files quantize to float32 on save.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
        data_.assign(element_count(), 0.0);
    }

    Tensor(std::initializer_list<size_t> shape) : Tensor(std::vector<size_t>(shape)) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_[i]; }

    size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(size_t i, size_t j, size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(size_t i, size_t j, size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double& at(size_t i, size_t j, size_t k, size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(size_t i, size_t j, size_t k, size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_string() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    size_t element_count() const {
        size_t n = 1;
        for (size_t d : shape_) n *= d;
        return shape_.empty() ? 0 : n;
    }

    std::vector<size_t> shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        raise(ErrorKind::ShapeMismatch,
              std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
}

} // namespace auscsed

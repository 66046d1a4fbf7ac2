#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fr {

// Dense 4-D array, NCHW, double precision. The single value carrier for
// images, feature maps, deformation fields and parameters.
class Tensor {
public:
    Tensor() : shape_{0, 0, 0, 0} {}
    Tensor(int b, int c, int h, int w, double fill = 0.0)
        : shape_{b, c, h, w}, data_(static_cast<size_t>(b) * c * h * w, fill) {
        if (b < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor: negative dimension");
    }

    static Tensor scalar(double v) {
        Tensor t(1, 1, 1, 1);
        t.data_[0] = v;
        return t;
    }

    int b() const { return shape_[0]; }
    int c() const { return shape_[1]; }
    int h() const { return shape_[2]; }
    int w() const { return shape_[3]; }
    const std::array<int, 4>& shape() const { return shape_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& at(int b, int c, int y, int x) {
        return data_[idx(b, c, y, x)];
    }
    const double& at(int b, int c, int y, int x) const {
        return data_[idx(b, c, y, x)];
    }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    size_t idx(int b, int c, int y, int x) const {
        return ((static_cast<size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor zeros_like() const { return Tensor(shape_[0], shape_[1], shape_[2], shape_[3]); }

    std::string shape_str() const {
        return std::to_string(shape_[0]) + "x" + std::to_string(shape_[1]) + "x" +
               std::to_string(shape_[2]) + "x" + std::to_string(shape_[3]);
    }

private:
    std::array<int, 4> shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace fr

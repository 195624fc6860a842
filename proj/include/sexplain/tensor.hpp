#ifndef SEXPLAIN_TENSOR_HPP
#define SEXPLAIN_TENSOR_HPP

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sexplain {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense NCHW tensor, contiguous row-major, rank 1..4.
template <typename Scalar>
struct Tensor {
    std::vector<int> shape;
    Eigen::Vector<Scalar, Eigen::Dynamic> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        if (shape.empty() || shape.size() > 4)
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
        for (std::size_t i = 0; i < shape.size(); ++i)
            if (shape[i] < 1)
                throw ShapeError("axis " + std::to_string(i) + " extent must be >= 1, got " +
                                 std::to_string(shape[i]));
        data.setZero(size());
    }

    Eigen::Index size() const {
        std::int64_t n = 1;
        for (int e : shape) n *= e;
        return static_cast<Eigen::Index>(n);
    }

    int extent(std::size_t axis) const { return axis < shape.size() ? shape[axis] : 1; }

    // NCHW accessors; valid when rank == 4
    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    Scalar& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<Eigen::Index>(in) * shape[1] + ic) * shape[2] + iy) * shape[3] + ix];
    }
    Scalar at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<Eigen::Index>(in) * shape[1] + ic) * shape[2] + iy) * shape[3] + ix];
    }

    // Contiguous HxW plane of one (sample, channel) pair.
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> plane(int in, int ic) const {
        const Eigen::Index hw = static_cast<Eigen::Index>(shape[2]) * shape[3];
        return {data.data() + (static_cast<Eigen::Index>(in) * shape[1] + ic) * hw, hw};
    }
    Eigen::Map<Eigen::Vector<Scalar, Eigen::Dynamic>> plane(int in, int ic) {
        const Eigen::Index hw = static_cast<Eigen::Index>(shape[2]) * shape[3];
        return {data.data() + (static_cast<Eigen::Index>(in) * shape[1] + ic) * hw, hw};
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape);
        out.data = data.template cast<Other>();
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename Scalar>
inline void require_shape(const Tensor<Scalar>& t, const std::vector<int>& expect,
                          const char* what) {
    if (t.shape == expect) return;
    std::string msg = std::string(what) + ": shape mismatch, expected (";
    for (std::size_t i = 0; i < expect.size(); ++i)
        msg += (i ? "," : "") + std::to_string(expect[i]);
    msg += ") got (";
    for (std::size_t i = 0; i < t.shape.size(); ++i)
        msg += (i ? "," : "") + std::to_string(t.shape[i]);
    msg += ")";
    throw ShapeError(msg);
}

}  // namespace sexplain

#endif

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "plite/error.hpp"

namespace plite {

/// Dense row-major fp32 n-d array. The last index varies fastest; images use
/// channels-last [h, w, c]. Treat tensors as immutable once shared: all public
/// operations are pure and return new tensors.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);

    const std::vector<int>& shape() const { return shape_; }
    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    bool empty() const { return data_.empty(); }

    float at(std::initializer_list<int> idx) const { return data_[flat_index(idx)]; }
    float& at(std::initializer_list<int> idx) { return data_[flat_index(idx)]; }

    /// Same data, new shape (element counts must match).
    Tensor reshaped(std::vector<int> shape) const;

    bool all_finite() const;
    std::string shape_str() const;

    static std::string shape_str(const std::vector<int>& shape);
    static int64_t shape_product(const std::vector<int>& shape);

private:
    size_t flat_index(std::initializer_list<int> idx) const;

    std::vector<int> shape_;
    std::vector<float> data_;
};

/// C[m,n] = A[m,k] * B[k,n]. Per output element the k-summation runs in
/// ascending order, so results are bit-reproducible run to run and equal to
/// the naive triple loop.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Transpose of a 2-D tensor.
Tensor transpose(const Tensor& a);

/// Unfolds [h,w,c] into a [oh*ow, kh*kw*c] patch matrix with zero padding.
/// Row r is the receptive field of output position r, flattened (kh, kw, c)
/// row-major. Output dims use the usual floor((dim + 2p - k)/s) + 1 rule.
Tensor im2col(const Tensor& input, int kernel_h, int kernel_w, int stride, int padding);

/// Inverse scatter of im2col: accumulates patch-matrix rows back into an
/// [h,w,c] tensor (overlaps add). Used by conv backprop.
Tensor col2im(const Tensor& cols, int h, int w, int c, int kernel_h, int kernel_w,
              int stride, int padding);

/// Output spatial size for one axis; throws if the kernel does not fit.
int conv_out_dim(int in, int kernel, int stride, int padding);

}  // namespace plite

#include "plite/tensor.hpp"

#include <cmath>
#include <sstream>

namespace plite {

int64_t Tensor::shape_product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (int d : shape_) {
        if (d < 1) throw Error("tensor dimension must be >= 1, got " + shape_str(shape_));
    }
    const int64_t expect = shape_product(shape_);
    if (expect != static_cast<int64_t>(data_.size())) {
        throw Error("tensor shape " + shape_str(shape_) + " wants " + std::to_string(expect) +
                    " elements but data has " + std::to_string(data_.size()));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const int64_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    const int64_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value));
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_product(shape) != size()) {
        throw Error("reshape " + shape_str() + " -> " + shape_str(shape) + ": element count differs");
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

size_t Tensor::flat_index(std::initializer_list<int> idx) const {
    size_t flat = 0;
    size_t axis = 0;
    for (int i : idx) {
        flat = flat * static_cast<size_t>(shape_[axis]) + static_cast<size_t>(i);
        ++axis;
    }
    return flat;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw Error("matmul expects 2-D tensors, got " + a.shape_str() + " and " + b.shape_str());
    }
    const int m = a.dim(0), k = a.dim(1);
    const int kb = b.dim(0), n = b.dim(1);
    if (k != kb) {
        throw Error("matmul inner dimensions differ: " + a.shape_str() + " vs " + b.shape_str());
    }

    std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    // i-k-j order: contiguous access on B and the output row, and per output
    // element the additions still happen in ascending k.
    for (int i = 0; i < m; ++i) {
        float* po = out.data() + static_cast<size_t>(i) * n;
        const float* par = pa + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float av = par[kk];
            const float* pbr = pb + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) {
                po[j] += av * pbr[j];
            }
        }
    }
    return Tensor({m, n}, std::move(out));
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw Error("transpose expects a 2-D tensor, got " + a.shape_str());
    const int m = a.dim(0), n = a.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n);
    const float* pa = a.data().data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<size_t>(j) * m + i] = pa[static_cast<size_t>(i) * n + j];
        }
    }
    return Tensor({n, m}, std::move(out));
}

int conv_out_dim(int in, int kernel, int stride, int padding) {
    const int span = in + 2 * padding - kernel;
    if (span < 0) {
        throw Error("kernel " + std::to_string(kernel) + " larger than padded input " +
                    std::to_string(in + 2 * padding));
    }
    return span / stride + 1;
}

Tensor im2col(const Tensor& input, int kernel_h, int kernel_w, int stride, int padding) {
    if (input.rank() != 3) throw Error("im2col expects [h,w,c] input, got " + input.shape_str());
    if (kernel_h < 1 || kernel_w < 1 || stride < 1 || padding < 0) {
        throw Error("im2col: invalid kernel/stride/padding");
    }
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    const int oh = conv_out_dim(h, kernel_h, stride, padding);
    const int ow = conv_out_dim(w, kernel_w, stride, padding);
    const int patch = kernel_h * kernel_w * c;

    std::vector<float> out(static_cast<size_t>(oh) * ow * patch, 0.0f);
    const float* src = input.data().data();
    size_t row = 0;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++row) {
            float* dst = out.data() + row * patch;
            for (int ky = 0; ky < kernel_h; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;  // zero padding
                for (int kx = 0; kx < kernel_w; ++kx) {
                    const int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* s = src + (static_cast<size_t>(iy) * w + ix) * c;
                    float* d = dst + (static_cast<size_t>(ky) * kernel_w + kx) * c;
                    for (int ch = 0; ch < c; ++ch) d[ch] = s[ch];
                }
            }
        }
    }
    return Tensor({oh * ow, patch}, std::move(out));
}

Tensor col2im(const Tensor& cols, int h, int w, int c, int kernel_h, int kernel_w,
              int stride, int padding) {
    const int oh = conv_out_dim(h, kernel_h, stride, padding);
    const int ow = conv_out_dim(w, kernel_w, stride, padding);
    const int patch = kernel_h * kernel_w * c;
    if (cols.rank() != 2 || cols.dim(0) != oh * ow || cols.dim(1) != patch) {
        throw Error("col2im: patch matrix " + cols.shape_str() + " does not match geometry");
    }

    Tensor out = Tensor::zeros({h, w, c});
    float* dst = out.data().data();
    const float* src = cols.data().data();
    size_t row = 0;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++row) {
            const float* s_row = src + row * patch;
            for (int ky = 0; ky < kernel_h; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kernel_w; ++kx) {
                    const int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* s = s_row + (static_cast<size_t>(ky) * kernel_w + kx) * c;
                    float* d = dst + (static_cast<size_t>(iy) * w + ix) * c;
                    for (int ch = 0; ch < c; ++ch) d[ch] += s[ch];
                }
            }
        }
    }
    return out;
}

}  // namespace plite

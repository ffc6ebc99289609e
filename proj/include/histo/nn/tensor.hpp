#ifndef HISTO_NN_TENSOR_HPP
#define HISTO_NN_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace histo::nn {

// Dense float32 tensor, row-major. Image batches are NHWC.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0f);
    }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape)
            n *= static_cast<std::size_t>(d);
        return shape.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(std::size_t i) const { return shape[i]; }
    bool empty() const { return data.empty(); }

    void release() {
        shape.clear();
        std::vector<float>().swap(data);
    }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }
};

std::string shape_str(const std::vector<int>& shape);

} // namespace histo::nn

#endif

#ifndef HISTO_NN_ADAM_HPP
#define HISTO_NN_ADAM_HPP

#include <vector>

#include "histo/nn/net.hpp"

namespace histo::nn {

struct AdamParams {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

class Adam {
public:
    Adam(std::vector<Param*> params, AdamParams hp);

    void zero_grad();
    void step();
    long steps() const { return t_; }

private:
    std::vector<Param*> params_;
    AdamParams hp_;
    std::vector<std::vector<float>> m_, v_;
    long t_ = 0;
};

} // namespace histo::nn

#endif

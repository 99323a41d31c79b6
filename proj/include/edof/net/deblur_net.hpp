#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "edof/net/layers.hpp"

namespace edof
{
struct Checkpoint;
}

namespace edof::net
{

struct NetConfig
{
    std::size_t channels = 3;
    std::size_t width = 32;                          // kernels per residual block
    std::vector<std::size_t> dilations{1, 2, 3, 2, 1}; // one residual block per entry
    float negative_slope = 0.01f;
    std::size_t min_side = 16;

    void validate() const;
    // Same layer types at a size small enough for finite-difference checks.
    static NetConfig miniature(std::size_t blocks = 2, std::size_t width = 4);
};

// Residual deblurring network:
//   r = conv3(LReLU(BN(conv_d(...))))  over the configured blocks
//   y = clamp(convT2(convT1(x + r)))
// The input is the sensor image only; there is no depth channel.
class DeblurNet
{
public:
    explicit DeblurNet(NetConfig config = {}, std::uint64_t seed = 0);

    const NetConfig &config() const { return config_; }

    Tensor4 forward(const Tensor4 &x, bool training);
    // Accumulates parameter gradients and returns dL/dx.
    Tensor4 backward(const Tensor4 &dy);

    // Which side of every kink (LReLU, clamp) each activation of the last
    // training-mode forward lies on. Finite differences are only meaningful
    // between points with equal patterns.
    std::vector<std::uint8_t> activation_pattern() const;

    std::vector<Parameter *> parameters();
    std::vector<Buffer> buffers();
    void zero_grad();
    std::size_t parameter_count();

    // Zero residual branch and identity transposed convolutions.
    void set_pass_through();
    void fill_parameters(float value);

    // Adds "net.<param>", "net.<param>.m", "net.<param>.v" and buffer entries.
    void save_state(Checkpoint &ckpt);
    void load_state(const Checkpoint &ckpt);

private:
    struct Block
    {
        Conv2d conv;
        BatchNorm2d bn;
        LeakyRelu act;
    };

    NetConfig config_;
    std::vector<Block> blocks_;
    std::unique_ptr<Conv2d> head_;
    std::unique_ptr<ConvTranspose2d> up1_, up2_;
    Clamp clamp_;
    bool cached_ = false;
};

// Weights of the loss: data L1 term plus alpha times the edge-aware sparse
// gradient prior sum exp(-beta |grad I|^gamma) |grad I_out|^gamma.
struct LossConfig
{
    double alpha = 1e-3;
    double beta = 10.0;
    double gamma = 0.8;

    void validate() const;
};

struct LossResult
{
    double value = 0.0; // mean over the batch
    double data = 0.0;
    double prior = 0.0; // before the alpha weight
    Tensor4 grad;       // dL/d output
};

// Per image: (sum_c |I - I_out|_1 + alpha R) / (H W); averaged over the batch.
// Differences are first differences with the previous row / column.
LossResult deblur_loss(const Tensor4 &output, const Tensor4 &reference, const LossConfig &config);

struct AdamConfig
{
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4; // decoupled

    void validate() const;
};

// One Adam step with bias correction and decoupled weight decay, t >= 1.
template <typename T>
void adam_update(T *value, const T *grad, T *m, T *v, std::size_t n, const AdamConfig &config, std::int64_t t);

void adam_step(const std::vector<Parameter *> &params, const AdamConfig &config, std::int64_t t);

} // namespace edof::net

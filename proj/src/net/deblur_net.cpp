#include "edof/net/deblur_net.hpp"

#include <cmath>
#include <sstream>

#include "edof/checkpoint.hpp"
#include "edof/random.hpp"

namespace edof::net
{

void NetConfig::validate() const
{
    if (channels == 0 || width == 0)
        throw DomainError("network channels and width must be positive");
    if (dilations.empty())
        throw DomainError("network needs at least one residual block");
    for (auto d : dilations)
        if (d == 0)
            throw DomainError("dilation must be positive");
    if (!(negative_slope >= 0.0f && negative_slope < 1.0f))
        throw DomainError("LReLU negative slope must be in [0, 1)");
}

NetConfig NetConfig::miniature(std::size_t blocks, std::size_t width)
{
    NetConfig c;
    c.width = width;
    c.dilations.clear();
    for (std::size_t i = 0; i < blocks; ++i)
        c.dilations.push_back(i + 1);
    return c;
}

DeblurNet::DeblurNet(NetConfig config, std::uint64_t seed) : config_(std::move(config))
{
    config_.validate();
    std::size_t in = config_.channels;
    for (std::size_t i = 0; i < config_.dilations.size(); ++i) {
        const std::string name = "block" + std::to_string(i);
        blocks_.push_back({Conv2d(in, config_.width, config_.dilations[i], false, name + ".conv"),
                           BatchNorm2d(config_.width, name + ".bn"), LeakyRelu(config_.negative_slope)});
        init_fan_in(blocks_.back().conv.weight, in * 9, derive_seed(seed, {i}));
        in = config_.width;
    }
    head_ = std::make_unique<Conv2d>(in, config_.channels, 1, true, "head");
    init_fan_in(head_->weight, in * 9, derive_seed(seed, {100}));
    up1_ = std::make_unique<ConvTranspose2d>(config_.channels, config_.channels, "up1");
    up2_ = std::make_unique<ConvTranspose2d>(config_.channels, config_.channels, "up2");
    init_fan_in(up1_->weight, config_.channels * 9, derive_seed(seed, {101}));
    init_fan_in(up2_->weight, config_.channels * 9, derive_seed(seed, {102}));
}

Tensor4 DeblurNet::forward(const Tensor4 &x, bool training)
{
    if (x.c != config_.channels)
        throw ShapeError("DeblurNet: expected " + std::to_string(config_.channels) + " input channels, got " +
                         std::to_string(x.c));
    if (x.h < config_.min_side || x.w < config_.min_side || x.n == 0)
        throw ShapeError("DeblurNet: input " + x.shape_string() + " below the minimum side " +
                         std::to_string(config_.min_side));
    cached_ = false;
    Tensor4 r = x;
    for (auto &b : blocks_)
        r = b.act.forward(b.bn.forward(b.conv.forward(r, training), training), training);
    r = head_->forward(r, training);
    for (std::size_t i = 0; i < r.size(); ++i)
        r.values[i] += x.values[i];
    r = up2_->forward(up1_->forward(r, training), training);
    Tensor4 y = clamp_.forward(r, training);
    cached_ = training;
    return y;
}

Tensor4 DeblurNet::backward(const Tensor4 &dy)
{
    if (!cached_)
        throw StateError("DeblurNet: backward called without a training-mode forward");
    const Tensor4 ds = up1_->backward(up2_->backward(clamp_.backward(dy)));
    Tensor4 dr = head_->backward(ds);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
        dr = it->conv.backward(it->bn.backward(it->act.backward(dr)));
    for (std::size_t i = 0; i < dr.size(); ++i)
        dr.values[i] += ds.values[i];
    return dr;
}

std::vector<std::uint8_t> DeblurNet::activation_pattern() const
{
    if (!cached_)
        throw StateError("DeblurNet: no training-mode forward to report on");
    std::vector<std::uint8_t> out;
    for (const auto &b : blocks_)
        b.act.append_pattern(out);
    clamp_.append_pattern(out);
    return out;
}

std::vector<Parameter *> DeblurNet::parameters()
{
    std::vector<Parameter *> p;
    for (auto &b : blocks_) {
        p.push_back(&b.conv.weight);
        p.push_back(&b.bn.scale);
        p.push_back(&b.bn.shift);
    }
    p.push_back(&head_->weight);
    p.push_back(&*head_->bias);
    for (auto *u : {up1_.get(), up2_.get()}) {
        p.push_back(&u->weight);
        p.push_back(&u->bias);
    }
    return p;
}

std::vector<Buffer> DeblurNet::buffers()
{
    std::vector<Buffer> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string name = "block" + std::to_string(i) + ".bn";
        out.push_back({name + ".running_mean", &blocks_[i].bn.running_mean});
        out.push_back({name + ".running_var", &blocks_[i].bn.running_var});
    }
    return out;
}

void DeblurNet::zero_grad()
{
    for (auto *p : parameters())
        p->zero_grad();
}

std::size_t DeblurNet::parameter_count()
{
    std::size_t n = 0;
    for (auto *p : parameters())
        n += p->size();
    return n;
}

void DeblurNet::set_pass_through()
{
    for (auto *p : parameters())
        std::fill(p->value.begin(), p->value.end(), 0.0f);
    up1_->set_identity();
    up2_->set_identity();
}

void DeblurNet::fill_parameters(float value)
{
    for (auto *p : parameters())
        std::fill(p->value.begin(), p->value.end(), value);
}

void DeblurNet::save_state(Checkpoint &ckpt)
{
    std::ostringstream dil;
    for (std::size_t i = 0; i < config_.dilations.size(); ++i)
        dil << (i ? "," : "") << config_.dilations[i];
    ckpt.meta["net.channels"] = std::to_string(config_.channels);
    ckpt.meta["net.width"] = std::to_string(config_.width);
    ckpt.meta["net.dilations"] = dil.str();
    for (auto *p : parameters()) {
        ckpt.add_values("net." + p->name, p->shape, p->value, SampleType::Float32);
        ckpt.add_values("net." + p->name + ".m", p->shape, p->m, SampleType::Float32);
        ckpt.add_values("net." + p->name + ".v", p->shape, p->v, SampleType::Float32);
    }
    for (const auto &b : buffers())
        ckpt.add_values("net." + b.name, {b.values->size()}, *b.values, SampleType::Float32);
}

void DeblurNet::load_state(const Checkpoint &ckpt)
{
    std::ostringstream dil;
    for (std::size_t i = 0; i < config_.dilations.size(); ++i)
        dil << (i ? "," : "") << config_.dilations[i];
    if (ckpt.meta_value("net.channels") != std::to_string(config_.channels) ||
        ckpt.meta_value("net.width") != std::to_string(config_.width) || ckpt.meta_value("net.dilations") != dil.str())
        throw ShapeError("checkpoint network configuration does not match");
    const auto copy = [&](const std::string &name, std::vector<float> &dst) {
        const auto &t = ckpt.get(name);
        if (t.values.size() != dst.size())
            throw ShapeError("checkpoint tensor " + name + " has the wrong size");
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = static_cast<float>(t.values[i]);
    };
    for (auto *p : parameters()) {
        copy("net." + p->name, p->value);
        copy("net." + p->name + ".m", p->m);
        copy("net." + p->name + ".v", p->v);
    }
    for (const auto &b : buffers())
        copy("net." + b.name, *b.values);
}

void LossConfig::validate() const
{
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma > 0.0 && gamma <= 2.0))
        throw DomainError("loss weights need alpha >= 0, beta >= 0, gamma in (0, 2]");
}

LossResult deblur_loss(const Tensor4 &output, const Tensor4 &reference, const LossConfig &config)
{
    config.validate();
    require_same_shape(output, reference, "deblur_loss");
    LossResult res;
    res.grad = Tensor4(output.n, output.c, output.h, output.w);
    const std::size_t H = output.h, W = output.w;
    const double norm = 1.0 / static_cast<double>(H * W);
    const double scale = norm / static_cast<double>(output.n);
    const double g = config.gamma;

    // One prior term on the difference a - b with reference difference ra - rb.
    auto prior_term = [&](double d_out, double d_ref, float &ga, float &gb) {
        const double w = std::exp(-config.beta * std::pow(std::abs(d_ref), g));
        const double mag = std::abs(d_out);
        if (mag == 0.0)
            return 0.0;
        const double dv = config.alpha * scale * w * g * std::pow(mag, g - 1.0) * (d_out > 0 ? 1.0 : -1.0);
        ga += static_cast<float>(dv);
        gb -= static_cast<float>(dv);
        return w * std::pow(mag, g);
    };

    for (std::size_t b = 0; b < output.n; ++b) {
        double data = 0.0, prior = 0.0;
        for (std::size_t c = 0; c < output.c; ++c) {
            const std::size_t off = (b * output.c + c) * H * W;
            const float *o = output.values.data() + off;
            const float *r = reference.values.data() + off;
            float *go = res.grad.values.data() + off;
            for (std::size_t i = 0; i < H * W; ++i) {
                const double d = static_cast<double>(o[i]) - r[i];
                data += std::abs(d);
                go[i] = static_cast<float>(d > 0 ? scale : d < 0 ? -scale : 0.0);
            }
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const std::size_t i = y * W + x;
                    if (y > 0)
                        prior += prior_term(static_cast<double>(o[i]) - o[i - W], static_cast<double>(r[i]) - r[i - W],
                                            go[i], go[i - W]);
                    if (x > 0)
                        prior += prior_term(static_cast<double>(o[i]) - o[i - 1], static_cast<double>(r[i]) - r[i - 1],
                                            go[i], go[i - 1]);
                }
        }
        res.data += data * norm;
        res.prior += prior * norm;
    }
    res.data /= static_cast<double>(output.n);
    res.prior /= static_cast<double>(output.n);
    res.value = res.data + config.alpha * res.prior;
    return res;
}

void AdamConfig::validate() const
{
    if (!(lr >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0) ||
        !(weight_decay >= 0.0))
        throw DomainError("invalid Adam hyperparameters");
}

template <typename T>
void adam_update(T *value, const T *grad, T *m, T *v, std::size_t n, const AdamConfig &config, std::int64_t t)
{
    if (t < 1)
        throw DomainError("Adam step counter must start at 1");
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double step = (mi / bc1) / (std::sqrt(vi / bc2) + config.eps) + config.weight_decay * value[i];
        value[i] = static_cast<T>(value[i] - config.lr * step);
    }
}

template void adam_update<float>(float *, const float *, float *, float *, std::size_t, const AdamConfig &, std::int64_t);
template void adam_update<double>(double *, const double *, double *, double *, std::size_t, const AdamConfig &,
                                  std::int64_t);

void adam_step(const std::vector<Parameter *> &params, const AdamConfig &config, std::int64_t t)
{
    for (auto *p : params)
        adam_update(p->value.data(), p->grad.data(), p->m.data(), p->v.data(), p->size(), config, t);
}

} // namespace edof::net

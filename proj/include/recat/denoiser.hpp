#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "recat/grid.hpp"
#include "recat/guidance.hpp"
#include "recat/schedule.hpp"

namespace recat {

/// The noise-prediction contract: maps a channel-stacked input at timestep t
/// to a C-channel duo noise estimate. Implementations must be deterministic
/// and safe to call concurrently.
class EpsModel {
public:
    virtual ~EpsModel() = default;
    virtual DuoGrid predict(const ModelInput& x, int t) const = 0;
};

struct DenoiserInputSpec {
    std::size_t latent_channels = 4;
    std::size_t region_height = 32;
    std::size_t width = 24;
    std::size_t in_channels() const { return 2 * latent_channels + 1; }
};

/// Sinusoidal embedding: [sin(t w_0), cos(t w_0), sin(t w_1), ...] with
/// w_k = 10000^(-2k/dim). Throws InvalidConfig for odd dim.
std::vector<double> timestep_embedding(int t, std::size_t dim, int T);

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

/// Ordered collection of named tensors; gradients share the layout of the
/// parameters they belong to.
class ParamSet {
public:
    std::vector<Tensor>& tensors() noexcept { return tensors_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
    std::size_t size() const noexcept { return tensors_.size(); }

    void add(std::string name, std::vector<std::size_t> shape);
    const Tensor* find(std::string_view name) const;
    std::size_t scalar_count() const;
    ParamSet zeros_like() const;
    bool same_layout(const ParamSet& other) const;
    bool all_finite() const;
    /// this += other; throws ShapeMismatch on layout mismatch.
    void accumulate(const ParamSet& other);
    void scale(double factor);

    friend bool operator==(const ParamSet& a, const ParamSet& b);

private:
    std::vector<Tensor> tensors_;
};

bool operator==(const Tensor& a, const Tensor& b);

struct TinyUNetConfig {
    std::size_t latent_channels = 4;
    std::size_t features = 32;
    std::size_t temb_dim = 32;
    std::size_t groups = 8;
    int timesteps = 1000;
};

/// Parameters of the toy denoiser: stem conv, two time-conditioned residual
/// blocks at full resolution around one stride-2 down / nearest-up pair with a
/// skip connection, then a normalized head conv back to C channels.
struct TinyUNetParams {
    TinyUNetConfig config;
    ParamSet tensors;

    static TinyUNetParams zeros(const TinyUNetConfig& config);
    /// Weights ~ N(0, 1/fan_in), biases 0, norm gains 1.
    static TinyUNetParams init(const TinyUNetConfig& config, std::uint64_t seed);
};

/// Activations recorded by one forward pass, consumed by backward.
class ForwardTape {
public:
    ForwardTape();
    ~ForwardTape();
    ForwardTape(ForwardTape&&) noexcept;
    ForwardTape& operator=(ForwardTape&&) noexcept;

    bool recorded() const noexcept;

private:
    friend class TinyUNet;
    struct Data;
    std::unique_ptr<Data> data_;
};

class TinyUNet final : public EpsModel {
public:
    explicit TinyUNet(TinyUNetParams params);
    TinyUNet(const TinyUNet& other);
    TinyUNet& operator=(const TinyUNet& other);

    const TinyUNetParams& params() const noexcept { return params_; }
    /// Any mutable access invalidates outstanding tapes.
    TinyUNetParams& mutable_params();

    DuoGrid forward(const ModelInput& x, int t, ForwardTape* tape = nullptr) const;
    /// Throws StaleTape if the tape is empty or was recorded against other
    /// parameters (or parameters that have changed since).
    ParamSet backward(const ForwardTape& tape, const DuoGrid& out_grad) const;

    DuoGrid predict(const ModelInput& x, int t) const override { return forward(x, t); }

private:
    void check_input(const ModelInput& x, int t) const;

    TinyUNetParams params_;
    std::uint64_t id_;
    std::uint64_t version_ = 0;
};

/// z0 ~ N(mu, s^2 I). Its optimal noise predictor is known in closed form.
struct AnalyticGaussianModel {
    LatentGrid mu;
    double s = 1.0;
};

/// E[eps | z_t] = sqrt(1 - abar) (z_t - sqrt(abar) mu) / (abar s^2 + 1 - abar).
LatentGrid analytic_eps(const AnalyticGaussianModel& model, const LatentGrid& zt, int t,
                        const NoiseSchedule& s);

/// EpsModel adapter: reads the noisy channels of the input and returns the
/// closed-form prediction. `model.mu` has the duo shape.
class AnalyticEpsModel final : public EpsModel {
public:
    AnalyticEpsModel(AnalyticGaussianModel model, NoiseSchedule schedule);
    DuoGrid predict(const ModelInput& x, int t) const override;

private:
    AnalyticGaussianModel model_;
    NoiseSchedule schedule_;
};

struct Complexity {
    std::uint64_t param_count = 0;
    std::uint64_t flops_per_image = 0;  // convolutions, 2 per MAC plus bias adds
};

Complexity count_params_flops(const TinyUNetParams& params, const DenoiserInputSpec& spec);

}  // namespace recat

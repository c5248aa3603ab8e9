#include "recat/denoiser.hpp"

#include <atomic>
#include <cmath>

#include "layers.hpp"
#include "recat/error.hpp"
#include "recat/rng.hpp"

namespace recat {

// ---------------------------------------------------------------------------
// Timestep embedding

std::vector<double> timestep_embedding(int t, std::size_t dim, int T) {
    if (dim == 0 || dim % 2 != 0) throw InvalidConfig("timestep embedding dim must be even");
    if (t < 0 || t >= T)
        throw IndexOutOfRange("timestep " + std::to_string(t) + " outside [0, " +
                              std::to_string(T) + ")");
    std::vector<double> e(dim);
    for (std::size_t k = 0; k < dim / 2; ++k) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
        const double arg = static_cast<double>(t) * freq;
        e[2 * k] = std::sin(arg);
        e[2 * k + 1] = std::cos(arg);
    }
    return e;
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
}

const Tensor* ParamSet::find(std::string_view name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return &t;
    return nullptr;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.values.size();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
}

bool ParamSet::same_layout(const ParamSet& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].name != o.tensors_[i].name || tensors_[i].shape != o.tensors_[i].shape)
            return false;
    return true;
}

bool ParamSet::all_finite() const {
    for (const auto& t : tensors_)
        for (double v : t.values)
            if (!std::isfinite(v)) return false;
    return true;
}

void ParamSet::accumulate(const ParamSet& o) {
    if (!same_layout(o)) throw ShapeMismatch("parameter layouts differ");
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        auto& a = tensors_[i].values;
        const auto& b = o.tensors_[i].values;
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
    }
}

void ParamSet::scale(double f) {
    for (auto& t : tensors_)
        for (double& v : t.values) v *= f;
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.name == b.name && a.shape == b.shape && a.values == b.values;
}

bool operator==(const ParamSet& a, const ParamSet& b) { return a.tensors_ == b.tensors_; }

// ---------------------------------------------------------------------------
// TinyUNet layout

namespace {

enum BlockSlot : std::size_t {
    kGn1G, kGn1B, kConv1W, kConv1B, kTembW, kTembB, kGn2G, kGn2B, kConv2W, kConv2B, kBlockSize
};

constexpr std::size_t kStemW = 0;
constexpr std::size_t kStemB = 1;
constexpr std::size_t kRb1 = 2;
constexpr std::size_t kDownW = kRb1 + kBlockSize;
constexpr std::size_t kDownB = kDownW + 1;
constexpr std::size_t kUpW = kDownW + 2;
constexpr std::size_t kUpB = kDownW + 3;
constexpr std::size_t kRb2 = kDownW + 4;
constexpr std::size_t kHeadGnG = kRb2 + kBlockSize;
constexpr std::size_t kHeadGnB = kHeadGnG + 1;
constexpr std::size_t kHeadW = kHeadGnG + 2;
constexpr std::size_t kHeadB = kHeadGnG + 3;
constexpr std::size_t kTensorCount = kHeadGnG + 4;

void validate_config(const TinyUNetConfig& c) {
    if (c.latent_channels == 0) throw InvalidConfig("latent channels must be positive");
    if (c.features == 0 || c.groups == 0 || c.features % c.groups != 0)
        throw InvalidConfig("features must be a positive multiple of the group count");
    if (c.temb_dim == 0 || c.temb_dim % 2 != 0)
        throw InvalidConfig("timestep embedding dim must be even");
    if (c.timesteps < 1) throw InvalidConfig("timesteps must be positive");
}

void add_block(ParamSet& p, const std::string& pre, std::size_t F, std::size_t E) {
    p.add(pre + ".gn1.gamma", {F});
    p.add(pre + ".gn1.beta", {F});
    p.add(pre + ".conv1.weight", {F, F, 3, 3});
    p.add(pre + ".conv1.bias", {F});
    p.add(pre + ".temb.weight", {F, E});
    p.add(pre + ".temb.bias", {F});
    p.add(pre + ".gn2.gamma", {F});
    p.add(pre + ".gn2.beta", {F});
    p.add(pre + ".conv2.weight", {F, F, 3, 3});
    p.add(pre + ".conv2.bias", {F});
}

ParamSet make_layout(const TinyUNetConfig& c) {
    const std::size_t C = c.latent_channels, F = c.features, E = c.temb_dim;
    ParamSet p;
    p.add("stem.weight", {F, 2 * C + 1, 3, 3});
    p.add("stem.bias", {F});
    add_block(p, "rb1", F, E);
    p.add("down.weight", {F, F, 3, 3});
    p.add("down.bias", {F});
    p.add("up.weight", {F, F, 3, 3});
    p.add("up.bias", {F});
    add_block(p, "rb2", F, E);
    p.add("head.gn.gamma", {F});
    p.add("head.gn.beta", {F});
    p.add("head.weight", {C, F, 3, 3});
    p.add("head.bias", {C});
    return p;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::atomic<std::uint64_t> g_next_model_id{1};

}  // namespace

TinyUNetParams TinyUNetParams::zeros(const TinyUNetConfig& config) {
    validate_config(config);
    return TinyUNetParams{config, make_layout(config)};
}

TinyUNetParams TinyUNetParams::init(const TinyUNetConfig& config, std::uint64_t seed) {
    TinyUNetParams p = zeros(config);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        Tensor& t = p.tensors[i];
        if (ends_with(t.name, ".gamma")) {
            std::fill(t.values.begin(), t.values.end(), 1.0);
        } else if (ends_with(t.name, ".weight")) {
            std::size_t fan_in = 1;
            for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
            const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
            CounterRng rng(seed, {0x1417, i});
            for (double& v : t.values) v = sd * rng.normal();
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Tape

namespace {

struct BlockTape {
    std::vector<double> n1, a1, c1, n2, a2;
    nn::GroupNormCache gn1, gn2;
};

}  // namespace

struct ForwardTape::Data {
    std::uint64_t model_id = 0;
    std::uint64_t version = 0;
    std::size_t height = 0;  // duo height
    std::size_t width = 0;
    std::vector<double> emb, x, h0, h1, d, ad, u, h2, h3, nh, ah;
    BlockTape rb1, rb2;
    nn::GroupNormCache gnh;
};

ForwardTape::ForwardTape() = default;
ForwardTape::~ForwardTape() = default;
ForwardTape::ForwardTape(ForwardTape&&) noexcept = default;
ForwardTape& ForwardTape::operator=(ForwardTape&&) noexcept = default;
bool ForwardTape::recorded() const noexcept { return data_ != nullptr; }

// ---------------------------------------------------------------------------
// TinyUNet

TinyUNet::TinyUNet(TinyUNetParams params)
    : params_(std::move(params)), id_(g_next_model_id.fetch_add(1)) {
    validate_config(params_.config);
    if (!params_.tensors.same_layout(make_layout(params_.config)))
        throw ShapeMismatch("parameter tensors do not match the network layout");
}

TinyUNet::TinyUNet(const TinyUNet& other)
    : params_(other.params_), id_(g_next_model_id.fetch_add(1)) {}

TinyUNet& TinyUNet::operator=(const TinyUNet& other) {
    if (this != &other) {
        params_ = other.params_;
        ++version_;
    }
    return *this;
}

TinyUNetParams& TinyUNet::mutable_params() {
    ++version_;
    return params_;
}

void TinyUNet::check_input(const ModelInput& x, int t) const {
    const auto& c = params_.config;
    if (x.latent_channels() != c.latent_channels)
        throw ShapeMismatch("model input has " + std::to_string(x.latent_channels()) +
                            " latent channels, network expects " + std::to_string(c.latent_channels));
    if (x.grid().height() % 4 != 0 || x.grid().width() % 2 != 0)
        throw ShapeMismatch("duo height must be a multiple of 4 and width even");
    if (t < 0 || t >= c.timesteps) throw IndexOutOfRange("timestep " + std::to_string(t));
}

namespace {

struct Dims {
    std::size_t F, E, G, H, W, HW;
};

std::span<const double> sp(const ParamSet& p, std::size_t i) { return p[i].values; }
std::span<double> sp(ParamSet& p, std::size_t i) { return p[i].values; }

void block_forward(const ParamSet& p, std::size_t base, const Dims& d,
                   const std::vector<double>& emb, const std::vector<double>& in,
                   std::vector<double>& out, BlockTape& bt, std::vector<double>& scratch) {
    const std::size_t n = d.F * d.HW;
    const nn::ConvShape cs{d.F, d.F, d.H, d.W, 1};
    bt.n1.resize(n);
    bt.a1.resize(n);
    bt.c1.resize(n);
    bt.n2.resize(n);
    bt.a2.resize(n);
    nn::group_norm_forward(in, d.F, d.G, sp(p, base + kGn1G), sp(p, base + kGn1B), bt.n1, bt.gn1);
    nn::silu_forward(bt.n1, bt.a1);
    nn::conv3x3_forward(bt.a1, sp(p, base + kConv1W), sp(p, base + kConv1B), cs, bt.c1, scratch);
    // Timestep shift on every row.
    const auto& tw = p[base + kTembW].values;
    const auto& tb = p[base + kTembB].values;
    for (std::size_t f = 0; f < d.F; ++f) {
        double shift = tb[f];
        for (std::size_t k = 0; k < d.E; ++k) shift += tw[f * d.E + k] * emb[k];
        for (std::size_t i = 0; i < d.HW; ++i) bt.c1[f * d.HW + i] += shift;
    }
    nn::group_norm_forward(bt.c1, d.F, d.G, sp(p, base + kGn2G), sp(p, base + kGn2B), bt.n2, bt.gn2);
    nn::silu_forward(bt.n2, bt.a2);
    out.resize(n);
    nn::conv3x3_forward(bt.a2, sp(p, base + kConv2W), sp(p, base + kConv2B), cs, out, scratch);
    for (std::size_t i = 0; i < n; ++i) out[i] += in[i];
}

// dout: gradient w.r.t. block output; returns gradient w.r.t. block input in din.
void block_backward(const ParamSet& p, ParamSet& g, std::size_t base, const Dims& d,
                    const std::vector<double>& emb, const BlockTape& bt,
                    const std::vector<double>& dout, std::vector<double>& din,
                    std::vector<double>& scratch) {
    const std::size_t n = d.F * d.HW;
    const nn::ConvShape cs{d.F, d.F, d.H, d.W, 1};
    std::vector<double> da2(n), dn2(n), dc1(n), da1(n), dn1(n);
    nn::conv3x3_backward(bt.a2, sp(p, base + kConv2W), dout, cs, da2, sp(g, base + kConv2W),
                         sp(g, base + kConv2B), scratch);
    nn::silu_backward(bt.n2, da2, dn2);
    nn::group_norm_backward(dn2, d.F, d.G, sp(p, base + kGn2G), bt.gn2, dc1,
                            sp(g, base + kGn2G), sp(g, base + kGn2B));
    auto& gtw = g[base + kTembW].values;
    auto& gtb = g[base + kTembB].values;
    for (std::size_t f = 0; f < d.F; ++f) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.HW; ++i) s += dc1[f * d.HW + i];
        gtb[f] += s;
        for (std::size_t k = 0; k < d.E; ++k) gtw[f * d.E + k] += s * emb[k];
    }
    nn::conv3x3_backward(bt.a1, sp(p, base + kConv1W), dc1, cs, da1, sp(g, base + kConv1W),
                         sp(g, base + kConv1B), scratch);
    nn::silu_backward(bt.n1, da1, dn1);
    din.resize(n);
    nn::group_norm_backward(dn1, d.F, d.G, sp(p, base + kGn1G), bt.gn1, din,
                            sp(g, base + kGn1G), sp(g, base + kGn1B));
    for (std::size_t i = 0; i < n; ++i) din[i] += dout[i];
}

}  // namespace

DuoGrid TinyUNet::forward(const ModelInput& x, int t, ForwardTape* tape) const {
    check_input(x, t);
    const auto& c = params_.config;
    const auto& p = params_.tensors;
    const std::size_t C = c.latent_channels;
    const std::size_t H = x.grid().height(), W = x.grid().width();
    const Dims full{c.features, c.temb_dim, c.groups, H, W, H * W};
    const Dims half{c.features, c.temb_dim, c.groups, H / 2, W / 2, (H / 2) * (W / 2)};
    const std::size_t F = c.features;

    auto data = std::make_unique<ForwardTape::Data>();
    auto& td = *data;
    td.model_id = id_;
    td.version = version_;
    td.height = H;
    td.width = W;
    td.emb = timestep_embedding(t, c.temb_dim, c.timesteps);
    td.x.assign(x.grid().data().begin(), x.grid().data().end());
    std::vector<double> scratch;

    td.h0.resize(F * full.HW);
    nn::conv3x3_forward(td.x, sp(p, kStemW), sp(p, kStemB), {2 * C + 1, F, H, W, 1}, td.h0, scratch);
    block_forward(p, kRb1, full, td.emb, td.h0, td.h1, td.rb1, scratch);

    td.d.resize(F * half.HW);
    td.ad.resize(F * half.HW);
    nn::conv3x3_forward(td.h1, sp(p, kDownW), sp(p, kDownB), {F, F, H, W, 2}, td.d, scratch);
    nn::silu_forward(td.d, td.ad);
    td.u.resize(F * full.HW);
    nn::upsample2x_forward(td.ad, F, H / 2, W / 2, td.u);
    td.h2.resize(F * full.HW);
    nn::conv3x3_forward(td.u, sp(p, kUpW), sp(p, kUpB), {F, F, H, W, 1}, td.h2, scratch);
    for (std::size_t i = 0; i < td.h2.size(); ++i) td.h2[i] += td.h1[i];

    block_forward(p, kRb2, full, td.emb, td.h2, td.h3, td.rb2, scratch);

    td.nh.resize(F * full.HW);
    td.ah.resize(F * full.HW);
    nn::group_norm_forward(td.h3, F, c.groups, sp(p, kHeadGnG), sp(p, kHeadGnB), td.nh, td.gnh);
    nn::silu_forward(td.nh, td.ah);
    LatentGrid out(C, H, W);
    nn::conv3x3_forward(td.ah, sp(p, kHeadW), sp(p, kHeadB), {F, C, H, W, 1}, out.data(), scratch);

    if (tape != nullptr) tape->data_ = std::move(data);
    return DuoGrid(std::move(out), H / 2);
}

ParamSet TinyUNet::backward(const ForwardTape& tape, const DuoGrid& out_grad) const {
    if (!tape.recorded()) throw StaleTape("backward called without a recorded forward pass");
    const auto& td = *tape.data_;
    if (td.model_id != id_ || td.version != version_)
        throw StaleTape("tape was recorded against different parameters");
    const auto& c = params_.config;
    const auto& p = params_.tensors;
    const std::size_t C = c.latent_channels, F = c.features;
    const std::size_t H = td.height, W = td.width;
    if (out_grad.channels() != C || out_grad.grid().height() != H || out_grad.width() != W)
        throw ShapeMismatch("output gradient shape does not match the forward pass");
    const Dims full{F, c.temb_dim, c.groups, H, W, H * W};

    ParamSet g = p.zeros_like();
    std::vector<double> scratch;
    const std::size_t n = F * full.HW;

    std::vector<double> dah(n), dnh(n), dh3(n);
    nn::conv3x3_backward(td.ah, sp(p, kHeadW), out_grad.grid().data(), {F, C, H, W, 1}, dah,
                         sp(g, kHeadW), sp(g, kHeadB), scratch);
    nn::silu_backward(td.nh, dah, dnh);
    nn::group_norm_backward(dnh, F, c.groups, sp(p, kHeadGnG), td.gnh, dh3, sp(g, kHeadGnG),
                            sp(g, kHeadGnB));

    std::vector<double> dh2;
    block_backward(p, g, kRb2, full, td.emb, td.rb2, dh3, dh2, scratch);

    // h2 = h1 + up(silu(down(h1)))
    std::vector<double> du(n), dad(F * (H / 2) * (W / 2)), dd(dad.size()), dh1(n);
    nn::conv3x3_backward(td.u, sp(p, kUpW), dh2, {F, F, H, W, 1}, du, sp(g, kUpW), sp(g, kUpB),
                         scratch);
    nn::upsample2x_backward(du, F, H / 2, W / 2, dad);
    nn::silu_backward(td.d, dad, dd);
    nn::conv3x3_backward(td.h1, sp(p, kDownW), dd, {F, F, H, W, 2}, dh1, sp(g, kDownW),
                         sp(g, kDownB), scratch);
    for (std::size_t i = 0; i < n; ++i) dh1[i] += dh2[i];

    std::vector<double> dh0;
    block_backward(p, g, kRb1, full, td.emb, td.rb1, dh1, dh0, scratch);

    nn::conv3x3_backward(td.x, sp(p, kStemW), dh0, {2 * C + 1, F, H, W, 1}, {}, sp(g, kStemW),
                         sp(g, kStemB), scratch);
    return g;
}

// ---------------------------------------------------------------------------
// Analytic oracle

LatentGrid analytic_eps(const AnalyticGaussianModel& model, const LatentGrid& zt, int t,
                        const NoiseSchedule& s) {
    if (!model.mu.same_shape(zt)) throw ShapeMismatch("analytic_eps: mean shape mismatch");
    if (!(model.s > 0.0)) throw InvalidConfig("analytic model needs s > 0");
    if (t < 0 || t >= s.steps()) throw IndexOutOfRange("analytic_eps timestep");
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    const double num = std::sqrt(1.0 - ab);
    const double sab = std::sqrt(ab);
    const double den = ab * model.s * model.s + (1.0 - ab);
    LatentGrid out(zt.channels(), zt.height(), zt.width());
    auto o = out.data();
    auto z = zt.data();
    auto m = model.mu.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = num * (z[i] - sab * m[i]) / den;
    return out;
}

AnalyticEpsModel::AnalyticEpsModel(AnalyticGaussianModel model, NoiseSchedule schedule)
    : model_(std::move(model)), schedule_(std::move(schedule)) {}

DuoGrid AnalyticEpsModel::predict(const ModelInput& x, int t) const {
    const std::size_t C = x.latent_channels();
    LatentGrid zt(C, x.grid().height(), x.grid().width());
    for (std::size_t c = 0; c < C; ++c) std::ranges::copy(x.grid().channel(c), zt.channel(c).begin());
    return DuoGrid(analytic_eps(model_, zt, t, schedule_), x.region_height());
}

// ---------------------------------------------------------------------------
// Complexity

Complexity count_params_flops(const TinyUNetParams& params, const DenoiserInputSpec& spec) {
    const auto& c = params.config;
    Complexity out;
    out.param_count = params.tensors.scalar_count();
    const std::uint64_t H = 2 * spec.region_height, W = spec.width;
    const std::uint64_t F = c.features, C = c.latent_channels, Cin = spec.in_channels();
    auto conv = [](std::uint64_t cin, std::uint64_t cout, std::uint64_t oh, std::uint64_t ow) {
        return 2 * 9 * cin * cout * oh * ow + cout * oh * ow;
    };
    out.flops_per_image += conv(Cin, F, H, W);          // stem
    out.flops_per_image += 2 * 2 * conv(F, F, H, W);    // two residual blocks, two convs each
    out.flops_per_image += conv(F, F, H / 2, W / 2);    // down
    out.flops_per_image += conv(F, F, H, W);            // up
    out.flops_per_image += conv(F, C, H, W);            // head
    return out;
}

}  // namespace recat

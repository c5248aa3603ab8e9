#include "recat/evalmetrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <Eigen/Dense>

#include "layers.hpp"
#include "recat/error.hpp"
#include "recat/parallel.hpp"
#include "recat/rng.hpp"

namespace recat {

namespace {

constexpr std::size_t kWindow = 11;
constexpr std::size_t kRadius = 5;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kWindow; ++k) {
        const double d = static_cast<double>(k) - static_cast<double>(kRadius);
        g[k] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += g[k];
    }
    for (auto& v : g) v /= sum;
    return g;
}

// Symmetric (half-sample) reflection: d c b a | a b c d | d c b a.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    if (i < 0) return static_cast<std::size_t>(-i - 1);
    if (i >= m) return static_cast<std::size_t>(2 * m - i - 1);
    return static_cast<std::size_t>(i);
}

// Separable Gaussian filter of one plane, rows then columns.
std::vector<double> blur(const std::vector<double>& x, std::size_t h, std::size_t w,
                         const std::array<double, kWindow>& g) {
    std::vector<double> tmp(h * w), out(h * w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k)
                acc += g[k] * x[r * w + reflect(static_cast<std::ptrdiff_t>(c + k) - kRadius, w)];
            tmp[r * w + c] = acc;
        }
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k)
                acc += g[k] * tmp[reflect(static_cast<std::ptrdiff_t>(r + k) - kRadius, h) * w + c];
            out[r * w + c] = acc;
        }
    return out;
}

void require_features(const FeatureSet& a, const FeatureSet& b, std::size_t min_count) {
    if (a.size() < min_count || b.size() < min_count)
        throw InsufficientSamples("need at least " + std::to_string(min_count) + " feature vectors per set");
    const std::size_t d = a.front().size();
    for (const auto* set : {&a, &b})
        for (const auto& v : *set)
            if (v.size() != d) throw ShapeMismatch("feature vectors differ in dimension");
}

Eigen::MatrixXd to_matrix(const FeatureSet& f) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(f.front().size()));
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < f[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i][j];
    return m;
}

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += kCovarianceShrinkage;
}

double poly_kernel(const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    const double k = dot / static_cast<double>(x.size()) + 1.0;
    return k * k * k;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range) {
    if (!a.same_shape(b)) throw ShapeMismatch("ssim: grid shapes differ");
    if (!(dynamic_range > 0.0)) throw InvalidConfig("ssim: dynamic_range must be > 0");
    if (a.height() < kWindow || a.width() < kWindow)
        throw TooSmall("ssim: height and width must be at least 11");
    const auto g = gaussian_taps();
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const std::size_t h = a.height(), w = a.width(), n = h * w;
    double total = 0.0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        const auto pa = a.channel(c);
        const auto pb = b.channel(c);
        std::vector<double> x(pa.begin(), pa.end()), y(pb.begin(), pb.end()), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = blur(x, h, w, g), my = blur(y, h, w, g);
        const auto sxx = blur(xx, h, w, g), syy = blur(yy, h, w, g), sxy = blur(xy, h, w, g);
        double plane = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            plane += num / den;
        }
        total += plane / static_cast<double>(n);
    }
    return total / static_cast<double>(a.channels());
}

Embedder::Embedder(const EmbeddingSpec& spec) : spec_(spec) {
    if (spec.channels == 0 || spec.dim == 0 || spec.hidden == 0 || spec.height < 4 || spec.width < 4)
        throw InvalidConfig("embedding spec has empty dimensions");
    w1_.resize(spec.hidden * spec.channels * 9);
    w2_.resize(spec.dim * spec.hidden * 9);
    b1_.assign(spec.hidden, 0.0);
    b2_.assign(spec.dim, 0.0);
    CounterRng rng(spec.seed, {0x454d4244, 1});
    const double s1 = 1.0 / std::sqrt(static_cast<double>(spec.channels * 9));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden * 9));
    for (auto& v : w1_) v = s1 * rng.normal();
    for (auto& v : w2_) v = s2 * rng.normal();
    if (!spec.zero_bias) {
        for (auto& v : b1_) v = 0.1 * rng.normal();
        for (auto& v : b2_) v = 0.1 * rng.normal();
    }
}

std::vector<double> Embedder::operator()(const LatentGrid& x) const {
    if (x.channels() != spec_.channels || x.height() != spec_.height || x.width() != spec_.width)
        throw ShapeMismatch("embed: input shape does not match the embedding spec");
    const nn::ConvShape l1{spec_.channels, spec_.hidden, spec_.height, spec_.width, 2};
    const nn::ConvShape l2{spec_.hidden, spec_.dim, l1.out_height(), l1.out_width(), 2};
    std::vector<double> scratch;
    std::vector<double> a(spec_.hidden * l1.out_height() * l1.out_width());
    nn::conv3x3_forward(x.data(), w1_, b1_, l1, a, scratch);
    if (!spec_.linear)
        for (auto& v : a) v = std::max(v, 0.0);
    std::vector<double> o(spec_.dim * l2.out_height() * l2.out_width());
    nn::conv3x3_forward(a, w2_, b2_, l2, o, scratch);
    const std::size_t plane = l2.out_height() * l2.out_width();
    std::vector<double> out(spec_.dim);
    for (std::size_t d = 0; d < spec_.dim; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += o[d * plane + i];
        out[d] = acc / static_cast<double>(plane);
    }
    return out;
}

std::vector<double> embed(const EmbeddingSpec& spec, const LatentGrid& x) { return Embedder(spec)(x); }

double frechet_proxy(const FeatureSet& real_feats, const FeatureSet& fake_feats) {
    require_features(real_feats, fake_feats, 2);
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    moments(to_matrix(real_feats), mu1, s1);
    moments(to_matrix(fake_feats), mu2, s2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
    const Eigen::VectorXd l1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd s1h = e1.eigenvectors() * l1.asDiagonal() * e1.eigenvectors().transpose();
    Eigen::MatrixXd m = s1h * s2 * s1h;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
    const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

double kid_poly(const FeatureSet& real_feats, const FeatureSet& fake_feats) {
    require_features(real_feats, fake_feats, 2);
    auto within = [](const FeatureSet& f) {
        double acc = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            for (std::size_t j = 0; j < f.size(); ++j)
                if (i != j) acc += poly_kernel(f[i], f[j]);
        const double m = static_cast<double>(f.size());
        return acc / (m * (m - 1.0));
    };
    double cross = 0.0;
    for (const auto& x : real_feats)
        for (const auto& y : fake_feats) cross += poly_kernel(x, y);
    cross /= static_cast<double>(real_feats.size()) * static_cast<double>(fake_feats.size());
    return within(real_feats) + within(fake_feats) - 2.0 * cross;
}

std::string to_string(EvalMode m) { return m == EvalMode::paired ? "paired" : "unpaired"; }

EvalMode parse_eval_mode(const std::string& s) {
    if (s == "paired") return EvalMode::paired;
    if (s == "unpaired") return EvalMode::unpaired;
    throw InvalidConfig("unknown eval mode '" + s + "'");
}

namespace {

FeatureSet embed_all(const Embedder& e, const std::vector<LatentGrid>& xs, int threads) {
    FeatureSet out(xs.size());
    parallel_for(xs.size(), threads, [&](std::size_t i) { out[i] = e(xs[i]); });
    return out;
}

MetricReport distribution_metrics(EvalMode mode, const std::vector<LatentGrid>& fakes,
                                  const std::vector<LatentGrid>& reals, const EmbeddingSpec& spec,
                                  int threads) {
    const Embedder e(spec);
    const FeatureSet fr = embed_all(e, reals, threads);
    const FeatureSet ff = embed_all(e, fakes, threads);
    MetricReport r;
    r.mode = mode;
    r.fid_g = frechet_proxy(fr, ff);
    r.kid_p = kid_poly(fr, ff);
    r.kid_p_x1000 = 1000.0 * r.kid_p;
    r.n_real = reals.size();
    r.n_fake = fakes.size();
    return r;
}

}  // namespace

MetricReport score_paired(const std::vector<LatentGrid>& fakes, const std::vector<LatentGrid>& reals,
                          const EmbeddingSpec& spec, int threads) {
    if (fakes.size() != reals.size()) throw ShapeMismatch("paired scoring needs one fake per real");
    MetricReport r = distribution_metrics(EvalMode::paired, fakes, reals, spec, threads);
    double acc = 0.0;
    for (std::size_t i = 0; i < fakes.size(); ++i) acc += ssim(fakes[i], reals[i], 2.0);
    r.ssim = acc / static_cast<double>(fakes.size());
    return r;
}

MetricReport score_unpaired(const std::vector<LatentGrid>& fakes, const std::vector<LatentGrid>& reals,
                            const EmbeddingSpec& spec, int threads) {
    return distribution_metrics(EvalMode::unpaired, fakes, reals, spec, threads);
}

std::vector<LatentGrid> real_people(const DatasetSplit& split, EvalMode mode) {
    std::vector<LatentGrid> out;
    if (mode == EvalMode::paired)
        for (const auto& s : split.test_paired) out.push_back(s.person_full);
    else
        for (const auto& u : split.test_unpaired) out.push_back(u.person.person_full);
    return out;
}

std::vector<LatentGrid> generate(const EpsModel& model, const DatasetSplit& split, EvalMode mode,
                                 const SamplerConfig& cfg, const NoiseSchedule& s, int threads) {
    std::vector<TryOnInputs> inputs;
    if (mode == EvalMode::paired)
        for (const auto& sc : split.test_paired) inputs.push_back(tryon_inputs(sc));
    else
        for (const auto& u : split.test_unpaired) inputs.push_back(tryon_inputs(u));
    if (inputs.empty()) throw InsufficientSamples("no test samples for " + to_string(mode) + " evaluation");
    std::vector<LatentGrid> out(inputs.size());
    parallel_for(inputs.size(), threads, [&](std::size_t i) {
        SamplerConfig c = cfg;
        c.seed = mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(i) + 1));
        out[i] = sample_tryon(model, inputs[i], c, s);
    });
    return out;
}

MetricReport evaluate(const EpsModel& model, const DatasetSplit& split, EvalMode mode,
                      const SamplerConfig& cfg, const NoiseSchedule& s, const EmbeddingSpec& spec,
                      int threads) {
    const auto fakes = generate(model, split, mode, cfg, s, threads);
    const auto reals = real_people(split, mode);
    return mode == EvalMode::paired ? score_paired(fakes, reals, spec, threads)
                                    : score_unpaired(fakes, reals, spec, threads);
}

std::vector<SweepRow> sweep_guidance(const EpsModel& model, const DatasetSplit& split,
                                     const std::vector<double>& omegas,
                                     const std::vector<ConditioningVariant>& variants,
                                     const std::vector<EvalMode>& modes, const SamplerConfig& base,
                                     const NoiseSchedule& s, const EmbeddingSpec& spec, int threads) {
    if (omegas.empty() || variants.empty() || modes.empty())
        throw InvalidConfig("sweep needs at least one omega, variant and mode");
    std::vector<SweepRow> rows;
    for (auto v : variants)
        for (double w : omegas)
            for (auto m : modes) {
                SamplerConfig c = base;
                c.guidance.variant = v;
                c.guidance.omega = w;
                rows.push_back({v, w, evaluate(model, split, m, c, s, spec, threads)});
            }
    return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "variant,omega,mode,ssim,fid_g,kid_p,kid_p_x1000,n_real,n_fake\n";
    for (const auto& r : rows) {
        os << to_string(r.variant) << ',' << fmt(r.omega) << ',' << to_string(r.report.mode) << ','
           << (r.report.ssim ? fmt(*r.report.ssim) : std::string()) << ',' << fmt(r.report.fid_g) << ','
           << fmt(r.report.kid_p) << ',' << fmt(r.report.kid_p_x1000) << ',' << r.report.n_real << ','
           << r.report.n_fake << '\n';
    }
}

double fid_range(const std::vector<SweepRow>& rows, ConditioningVariant variant, EvalMode mode) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& r : rows) {
        if (r.variant != variant || r.report.mode != mode) continue;
        lo = any ? std::min(lo, r.report.fid_g) : r.report.fid_g;
        hi = any ? std::max(hi, r.report.fid_g) : r.report.fid_g;
        any = true;
    }
    if (!any) throw InvalidConfig("no sweep rows for the requested variant and mode");
    return hi - lo;
}

}  // namespace recat

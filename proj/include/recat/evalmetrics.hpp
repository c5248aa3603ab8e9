#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "recat/denoiser.hpp"
#include "recat/grid.hpp"
#include "recat/toydata.hpp"
#include "recat/tryon.hpp"

namespace recat {

/// Mean SSIM over channels and 11x11 Gaussian windows (sigma 1.5) with
/// symmetric padding; K1 = 0.01, K2 = 0.03.
double ssim(const LatentGrid& a, const LatentGrid& b, double dynamic_range);

/// Fixed random two-layer conv feature extractor with global average pooling.
struct EmbeddingSpec {
    std::uint64_t seed = 0;
    std::size_t channels = 4;
    std::size_t height = 32;
    std::size_t width = 24;
    std::size_t dim = 64;
    std::size_t hidden = 32;
    bool linear = false;     // drop the ReLU between the layers
    bool zero_bias = true;
};

class Embedder {
public:
    explicit Embedder(const EmbeddingSpec& spec);
    const EmbeddingSpec& spec() const noexcept { return spec_; }
    std::vector<double> operator()(const LatentGrid& x) const;

private:
    EmbeddingSpec spec_;
    std::vector<double> w1_, b1_, w2_, b2_;
};

std::vector<double> embed(const EmbeddingSpec& spec, const LatentGrid& x);

using FeatureSet = std::vector<std::vector<double>>;

/// Shrinkage added to both covariances before the matrix square root.
inline constexpr double kCovarianceShrinkage = 1e-6;

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2), unbiased covariances.
double frechet_proxy(const FeatureSet& real_feats, const FeatureSet& fake_feats);

/// Unbiased MMD^2 with kernel (x.y / d + 1)^3.
double kid_poly(const FeatureSet& real_feats, const FeatureSet& fake_feats);

enum class EvalMode { paired, unpaired };
std::string to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& s);

struct MetricReport {
    EvalMode mode = EvalMode::paired;
    std::optional<double> ssim;  // paired only
    double fid_g = 0.0;
    double kid_p = 0.0;
    double kid_p_x1000 = 0.0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
};

/// Paired scoring: SSIM of fakes[i] against reals[i] plus distribution metrics.
MetricReport score_paired(const std::vector<LatentGrid>& fakes, const std::vector<LatentGrid>& reals,
                          const EmbeddingSpec& spec, int threads = 1);
MetricReport score_unpaired(const std::vector<LatentGrid>& fakes, const std::vector<LatentGrid>& reals,
                            const EmbeddingSpec& spec, int threads = 1);

/// Ground-truth person images of a split mode (distribution reference).
std::vector<LatentGrid> real_people(const DatasetSplit& split, EvalMode mode);

/// Try-on outputs for every test sample of `mode`; sample i draws its
/// trajectory noise from a seed derived from (cfg.seed, i).
std::vector<LatentGrid> generate(const EpsModel& model, const DatasetSplit& split, EvalMode mode,
                                 const SamplerConfig& cfg, const NoiseSchedule& s, int threads = 1);

MetricReport evaluate(const EpsModel& model, const DatasetSplit& split, EvalMode mode,
                      const SamplerConfig& cfg, const NoiseSchedule& s, const EmbeddingSpec& spec,
                      int threads = 1);

struct SweepRow {
    ConditioningVariant variant = ConditioningVariant::ReCatVTON;
    double omega = 0.0;
    MetricReport report;
};

std::vector<SweepRow> sweep_guidance(const EpsModel& model, const DatasetSplit& split,
                                     const std::vector<double>& omegas,
                                     const std::vector<ConditioningVariant>& variants,
                                     const std::vector<EvalMode>& modes, const SamplerConfig& base,
                                     const NoiseSchedule& s, const EmbeddingSpec& spec, int threads = 1);

/// CSV header: variant,omega,mode,ssim,fid_g,kid_p,kid_p_x1000,n_real,n_fake
void write_metrics_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Max minus min of fid_g over rows matching (variant, mode).
double fid_range(const std::vector<SweepRow>& rows, ConditioningVariant variant, EvalMode mode);

}  // namespace recat

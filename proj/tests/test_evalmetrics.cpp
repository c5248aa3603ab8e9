#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "recat/error.hpp"
#include "recat/evalmetrics.hpp"
#include "recat/rng.hpp"
#include "support.hpp"

using namespace recat;
using recat::test::random_grid;

namespace {

// Direct 2-D windowed SSIM: explicit 11x11 weight sums per pixel, reflect padding.
double ssim_direct(const LatentGrid& a, const LatentGrid& b, double L) {
    double g[11], gs = 0.0;
    for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
    for (double& v : g) v /= gs;
    const long H = static_cast<long>(a.height()), W = static_cast<long>(a.width());
    auto refl = [](long i, long n) { return i < 0 ? -i - 1 : (i >= n ? 2 * n - i - 1 : i); };
    const double C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);
    double total = 0.0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        double chan = 0.0;
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = g[i] * g[j];
                        const auto yy = static_cast<std::size_t>(refl(y + i - 5, H));
                        const auto xx = static_cast<std::size_t>(refl(x + j - 5, W));
                        const double va = a.at(c, yy, xx), vb = b.at(c, yy, xx);
                        ma += w * va, mb += w * vb, aa += w * va * va, bb += w * vb * vb, ab += w * va * vb;
                    }
                const double sa = aa - ma * ma, sb = bb - mb * mb, sab = ab - ma * mb;
                chan += ((2 * ma * mb + C1) * (2 * sab + C2)) / ((ma * ma + mb * mb + C1) * (sa + sb + C2));
            }
        total += chan / static_cast<double>(H * W);
    }
    return total / static_cast<double>(a.channels());
}

double kernel(const std::vector<double>& x, const std::vector<double>& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * y[i];
    const double k = d / static_cast<double>(x.size()) + 1.0;
    return k * k * k;
}

double kid_brute(const FeatureSet& X, const FeatureSet& Y) {
    double xx = 0, yy = 0, xy = 0;
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < X.size(); ++j)
            if (i != j) xx += kernel(X[i], X[j]);
    for (std::size_t i = 0; i < Y.size(); ++i)
        for (std::size_t j = 0; j < Y.size(); ++j)
            if (i != j) yy += kernel(Y[i], Y[j]);
    for (const auto& x : X)
        for (const auto& y : Y) xy += kernel(x, y);
    const double m = static_cast<double>(X.size()), n = static_cast<double>(Y.size());
    return xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2.0 * xy / (m * n);
}

FeatureSet gaussian_features(CounterRng& rng, std::size_t n, std::size_t d, double shift = 0.0) {
    FeatureSet f(n, std::vector<double>(d));
    for (auto& v : f)
        for (auto& x : v) x = rng.normal() + shift;
    return f;
}

std::vector<LatentGrid> people(const std::vector<ToyScene>& scenes) {
    std::vector<LatentGrid> out;
    for (const auto& s : scenes) out.push_back(s.person_full);
    return out;
}

FeatureSet features(const std::vector<LatentGrid>& xs, const EmbeddingSpec& spec) {
    const Embedder e(spec);
    FeatureSet f;
    for (const auto& x : xs) f.push_back(e(x));
    return f;
}

}  // namespace

TEST_CASE("ssim examples") {
    const LatentGrid a = random_grid(1, 3, 16, 14);
    CHECK(ssim(a, a, 2.0) == 1.0);
    const double L = 2.0, C1 = (0.01 * L) * (0.01 * L);
    CHECK(ssim(LatentGrid(2, 12, 12, 0.0), LatentGrid(2, 12, 12, L), L) == doctest::Approx(C1 / (L * L + C1)).epsilon(1e-14));
    const LatentGrid b = random_grid(2, 3, 16, 14);
    CHECK(ssim(a, b, 2.0) == ssim(b, a, 2.0));
    CHECK_THROWS_AS(ssim(LatentGrid(1, 10, 20), LatentGrid(1, 10, 20), 2.0), TooSmall);
    CHECK_THROWS_AS(ssim(LatentGrid(1, 20, 10), LatentGrid(1, 20, 10), 2.0), TooSmall);
    CHECK_THROWS_AS(ssim(a, LatentGrid(3, 16, 13), 2.0), ShapeMismatch);
}

TEST_CASE("ssim matches scikit-image on a fixed pair") {
    LatentGrid a(2, 16, 13), b(2, 16, 13);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t h = 0; h < 16; ++h)
            for (std::size_t w = 0; w < 13; ++w) {
                const double hd = static_cast<double>(h), wd = static_cast<double>(w), cd = static_cast<double>(c);
                a.at(c, h, w) = 0.8 * std::sin(0.37 * hd + 0.11 * wd + cd);
                b.at(c, h, w) = 0.7 * a.at(c, h, w) + 0.3 * std::cos(0.21 * hd - 0.17 * wd + 0.5 * cd) +
                                0.1 * std::sin(0.05 * hd * wd);
            }
    // structural_similarity(data_range=2, gaussian_weights=True, sigma=1.5,
    // use_sample_covariance=False, full=True), mean of the full map per channel.
    CHECK(std::abs(ssim(a, b, 2.0) - 0.5290034214288254) < 1e-12);
    CHECK(std::abs(ssim_direct(a, b, 2.0) - 0.5290034214288254) < 1e-12);
}

TEST_CASE("ssim matches a direct windowed reference on random pairs") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const LatentGrid a = random_grid(seed, 2, 11 + seed, 20 - seed, 0.5);
        LatentGrid b = a;
        CounterRng rng(seed, {9});
        for (double& v : b.data()) v = 0.6 * v + 0.3 * rng.normal();
        CHECK(std::abs(ssim(a, b, 2.0) - ssim_direct(a, b, 2.0)) < 1e-8);
    }
}

TEST_CASE("embedding") {
    EmbeddingSpec spec;
    const Embedder e(spec);
    const std::vector<double> zero = e(LatentGrid(4, 32, 24));
    CHECK(zero.size() == 64);
    for (double v : zero) CHECK(v == 0.0);
    const LatentGrid x = random_grid(3, 4, 32, 24);
    CHECK(e(x) == e(x));
    CHECK(embed(spec, x) == e(x));
    spec.seed = 1;
    CHECK_FALSE(embed(spec, x) == e(x));

    EmbeddingSpec lin;
    lin.linear = true;
    LatentGrid x2 = x;
    for (double& v : x2.data()) v *= 2.0;
    const auto f1 = embed(lin, x), f2 = embed(lin, x2);
    for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f2[i] == doctest::Approx(2.0 * f1[i]).epsilon(1e-13));
    CHECK_THROWS_AS(e(LatentGrid(4, 32, 23)), ShapeMismatch);
}

TEST_CASE("frechet proxy") {
    const FeatureSet X{{0, 0}, {1, 0}, {0, 2}};
    const FeatureSet Y{{1, 1}, {2, 1}, {1, 4}};
    const FeatureSet Y2{{0, 1}, {3, 0}, {1, 1}};
    // Reference values from an offline scipy.linalg.sqrtm computation.
    CHECK(frechet_proxy(X, Y) == doctest::Approx(3.111110944444537).epsilon(1e-12));
    CHECK(frechet_proxy(X, Y2) == doctest::Approx(2.4273974777373954).epsilon(1e-12));
    CHECK(frechet_proxy(Y2, X) == doctest::Approx(2.4273974777373954).epsilon(1e-12));

    CounterRng rng(1, {2});
    const FeatureSet A = gaussian_features(rng, 100, 8);
    CHECK(std::abs(frechet_proxy(A, A)) < 1e-6);

    const FeatureSet big1 = gaussian_features(rng, 10000, 3);
    FeatureSet big2 = gaussian_features(rng, 10000, 3);
    for (auto& v : big2) v[0] += 1.0, v[1] += 0.5;
    CHECK(frechet_proxy(big1, big2) == doctest::Approx(1.25).epsilon(0.04));

    CHECK_THROWS_AS(frechet_proxy(FeatureSet{{1, 2}}, X), InsufficientSamples);
    CHECK_THROWS_AS(frechet_proxy(X, FeatureSet{{1, 2, 3}, {1, 2, 4}}), ShapeMismatch);
}

TEST_CASE("kid examples") {
    CounterRng rng(3, {4});
    const FeatureSet pq = gaussian_features(rng, 2, 5);
    const double k_pq = kernel(pq[0], pq[1]);
    CHECK(kid_poly(pq, pq) == doctest::Approx(k_pq - 0.5 * (kernel(pq[0], pq[0]) + kernel(pq[1], pq[1]))).epsilon(1e-13));
    const FeatureSet X = gaussian_features(rng, 7, 5), Y = gaussian_features(rng, 9, 5, 0.3);
    CHECK(kid_poly(X, Y) == doctest::Approx(kid_brute(X, Y)).epsilon(1e-12));
    const FeatureSet zeros(5, std::vector<double>(4, 0.0));
    CHECK(kid_poly(zeros, zeros) == 0.0);
    CHECK_THROWS_AS(kid_poly(FeatureSet{{1.0}}, zeros), InsufficientSamples);
}

TEST_CASE("kid is unbiased over same-distribution resamples") {
    CounterRng rng(5, {6});
    std::vector<double> vals;
    for (int r = 0; r < 200; ++r) vals.push_back(kid_poly(gaussian_features(rng, 30, 6), gaussian_features(rng, 30, 6)));
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= 200.0;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / 199.0 / 200.0);
    INFO("mean " << mean << " se " << se);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("scores ignore fake-set order and an oracle generator is perfect") {
    const DatasetSplit d = gen_dataset(2, 0, 48, ToyDataParams{});
    const EmbeddingSpec spec;
    const std::vector<LatentGrid> reals = real_people(d, EvalMode::paired);
    CHECK(reals.size() == 24);
    std::vector<LatentGrid> oracle;
    for (const auto& s : d.test_paired)
        oracle.push_back(reconstruct_person(s.person_masked, s.garment, s.body_id, ToyDataParams{}));
    const MetricReport perfect = score_paired(oracle, reals, spec);
    CHECK(*perfect.ssim == 1.0);
    CHECK(std::abs(perfect.fid_g) < 1e-6);
    CHECK(perfect.n_real == 24);
    CHECK(perfect.n_fake == 24);

    std::vector<LatentGrid> fakes;
    for (const auto& u : d.test_unpaired) fakes.push_back(u.person.person_masked);
    const MetricReport a = score_unpaired(fakes, reals, spec);
    std::reverse(fakes.begin(), fakes.end());
    std::rotate(fakes.begin(), fakes.begin() + 5, fakes.end());
    const MetricReport b = score_unpaired(fakes, reals, spec, 3);
    CHECK(!a.ssim.has_value());
    CHECK(a.fid_g == doctest::Approx(b.fid_g).epsilon(1e-10));
    CHECK(a.kid_p == doctest::Approx(b.kid_p).epsilon(1e-10));
    CHECK(a.kid_p_x1000 == 1000.0 * a.kid_p);
    CHECK(a.fid_g > perfect.fid_g);
}

TEST_CASE("proxy FID separates pattern vocabularies") {
    const ToyDataParams base;
    ToyDataParams two = base;
    two.n_patterns = 2;
    const EmbeddingSpec spec;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const FeatureSet a = features(people(gen_dataset(seed, 200, 0, base).train), spec);
        const FeatureSet a2 = features(people(gen_dataset(seed + 100, 200, 0, base).train), spec);
        const FeatureSet b = features(people(gen_dataset(seed + 200, 200, 0, two).train), spec);
        CHECK(frechet_proxy(a, a2) < frechet_proxy(a, b));
    }
}

TEST_CASE("generation, evaluation and sweeps") {
    const DatasetSplit d = gen_dataset(4, 0, 8, ToyDataParams{});
    const NoiseSchedule s = build_schedule(ScheduleKind::scaled_linear, 1000, 8.5e-4, 1.2e-2);
    const AnalyticEpsModel model({LatentGrid(4, 64, 24, 0.1), 0.6}, s);
    SamplerConfig cfg;
    cfg.steps = 4;
    const auto g1 = generate(model, d, EvalMode::paired, cfg, s, 1);
    const auto g3 = generate(model, d, EvalMode::paired, cfg, s, 3);
    CHECK(g1 == g3);
    CHECK(g1.size() == 4);
    CHECK_FALSE(g1[0] == g1[1]);

    const EmbeddingSpec spec;
    const MetricReport r = evaluate(model, d, EvalMode::unpaired, cfg, s, spec);
    CHECK(r.mode == EvalMode::unpaired);
    CHECK(r.n_fake == 4);
    CHECK(std::isfinite(r.fid_g));

    const auto one = sweep_guidance(model, d, {2.5}, {ConditioningVariant::ReCatVTON}, {EvalMode::paired}, cfg, s, spec);
    CHECK(one.size() == 1);
    const auto rows = sweep_guidance(model, d, {1.0, 2.5, 7.5}, {ConditioningVariant::CatVTON, ConditioningVariant::ReCatVTON},
                                     {EvalMode::paired, EvalMode::unpaired}, cfg, s, spec);
    CHECK(rows.size() == 12);
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "variant,omega,mode,ssim,fid_g,kid_p,kid_p_x1000,n_real,n_fake");
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 12);

    double lo = 1e300, hi = -1e300;
    for (const auto& row : rows)
        if (row.variant == ConditioningVariant::CatVTON && row.report.mode == EvalMode::paired)
            lo = std::min(lo, row.report.fid_g), hi = std::max(hi, row.report.fid_g);
    CHECK(fid_range(rows, ConditioningVariant::CatVTON, EvalMode::paired) == hi - lo);
    CHECK(parse_eval_mode(to_string(EvalMode::unpaired)) == EvalMode::unpaired);
}

#include <doctest.h>

#include "recat/denoiser.hpp"
#include "recat/error.hpp"
#include "recat/schedule.hpp"
#include "support.hpp"

using namespace recat;
using recat::test::random_grid;
using recat::test::rel_err;

namespace {

NoiseSchedule sd_schedule() { return build_schedule(ScheduleKind::scaled_linear, 1000, 8.5e-4, 1.2e-2); }

LatentGrid scalar(double v) { return LatentGrid(1, 1, 1, v); }

// Two-level schedule with chosen alpha_bar values, for scalar step oracles.
NoiseSchedule two_level(double ab0, double ab1) {
    NoiseSchedule s;
    s.kind = ScheduleKind::linear;
    s.alpha_bar = {ab0, ab1};
    s.alpha = {ab0, ab1 / ab0};
    s.beta = {1.0 - s.alpha[0], 1.0 - s.alpha[1]};
    return s;
}

}  // namespace

TEST_CASE("build_schedule examples") {
    const NoiseSchedule lin = build_schedule(ScheduleKind::linear, 1000, 1e-4, 0.02);
    CHECK(lin.beta[0] == 1e-4);
    CHECK(lin.alpha_bar[0] == doctest::Approx(0.9999).epsilon(1e-15));
    CHECK(lin.beta[999] == doctest::Approx(0.02).epsilon(1e-14));

    for (auto kind : {ScheduleKind::linear, ScheduleKind::scaled_linear}) {
        const NoiseSchedule one = build_schedule(kind, 1, 3e-3, 9e-3);
        CHECK(one.steps() == 1);
        CHECK(one.beta[0] == 3e-3);
        CHECK(one.alpha_bar[0] == 1.0 - 3e-3);
    }

    // 40-digit cumulative product of (1 - beta_t) computed offline.
    CHECK(rel_err(sd_schedule().alpha_bar[999], 0.0046600985130772404039) < 1e-10);
    CHECK(rel_err(lin.alpha_bar[999], 0.000040358297653756833148) < 1e-10);

    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 0, 1e-4, 0.02), InvalidConfig);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.0, 0.02), InvalidConfig);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.03, 0.02), InvalidConfig);
    CHECK_THROWS_AS(build_schedule(ScheduleKind::linear, 10, 0.01, 1.0), InvalidConfig);
    CHECK(parse_schedule_kind("scaled_linear") == ScheduleKind::scaled_linear);
    CHECK_THROWS_AS(parse_schedule_kind("cosine"), InvalidConfig);
}

TEST_CASE("schedule invariants") {
    for (const auto& s : {sd_schedule(), build_schedule(ScheduleKind::linear, 1000, 1e-4, 0.02)}) {
        double prod = 1.0;
        for (int t = 0; t < s.steps(); ++t) {
            const auto i = static_cast<std::size_t>(t);
            CHECK((s.beta[i] > 0.0 && s.beta[i] < 1.0));
            if (t > 0) {
                CHECK(s.beta[i] > s.beta[i - 1]);
                CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
            }
            CHECK(s.alpha[i] == 1.0 - s.beta[i]);
            prod *= 1.0 - s.beta[i];
            CHECK(rel_err(s.alpha_bar[i], prod) < 1e-12);
        }
        CHECK(s.alpha_bar_at(-1) == 1.0);
    }
}

TEST_CASE("forward_diffuse examples") {
    const NoiseSchedule s = sd_schedule();
    const LatentGrid z0 = random_grid(1, 2, 3, 4), eps = random_grid(2, 2, 3, 4);
    const LatentGrid a = forward_diffuse(z0, 500, LatentGrid(2, 3, 4), s);
    const LatentGrid b = forward_diffuse(LatentGrid(2, 3, 4), 500, eps, s);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        CHECK(a.data()[i] == doctest::Approx(std::sqrt(s.alpha_bar[500]) * z0.data()[i]).epsilon(1e-15));
        CHECK(b.data()[i] == doctest::Approx(std::sqrt(1.0 - s.alpha_bar[500]) * eps.data()[i]).epsilon(1e-15));
    }
    CHECK_THROWS_AS(forward_diffuse(z0, 1000, eps, s), IndexOutOfRange);
    CHECK_THROWS_AS(forward_diffuse(z0, 0, LatentGrid(1, 3, 4), s), ShapeMismatch);
}

TEST_CASE("forward_diffuse moment preservation") {
    const NoiseSchedule s = sd_schedule();
    int t_half = 0;
    while (s.alpha_bar[static_cast<std::size_t>(t_half)] > 0.5) ++t_half;
    for (int t : {0, 100, t_half, 999}) {
        const LatentGrid z0 = random_grid(10 + t, 1, 250, 400), eps = random_grid(20 + t, 1, 250, 400);
        const LatentGrid zt = forward_diffuse(z0, t, eps, s);
        double sum = 0.0, sq = 0.0;
        for (double v : zt.data()) sum += v, sq += v * v;
        const double n = static_cast<double>(zt.size());
        const double var = sq / n - (sum / n) * (sum / n);
        CHECK(var == doctest::Approx(1.0).epsilon(0.03));
    }
}

TEST_CASE("predict_z0 examples and inverse") {
    const NoiseSchedule s = two_level(0.5, 0.25);
    CHECK(predict_z0(scalar(0.7), scalar(0.0), 1, s).at(0, 0, 0) == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(predict_z0(scalar(0.0), scalar(1.0), 0, s).at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-15));

    const NoiseSchedule sd = sd_schedule();
    for (int t : {0, 10, 400, 999}) {
        const LatentGrid z0 = random_grid(t, 3, 4, 5), eps = random_grid(t + 1, 3, 4, 5);
        const LatentGrid back = predict_z0(forward_diffuse(z0, t, eps, sd), eps, t, sd);
        for (std::size_t i = 0; i < z0.size(); ++i) CHECK(back.data()[i] == doctest::Approx(z0.data()[i]).epsilon(1e-9));
    }
}

TEST_CASE("ddpm_step examples") {
    const NoiseSchedule s = sd_schedule();
    const LatentGrid xi = random_grid(3, 2, 2, 2);
    const LatentGrid z = ddpm_step(LatentGrid(2, 2, 2), LatentGrid(2, 2, 2), 300, xi, s);
    const double sigma = std::sqrt(s.beta[300] * (1.0 - s.alpha_bar[299]) / (1.0 - s.alpha_bar[300]));
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == doctest::Approx(sigma * xi.data()[i]).epsilon(1e-14));

    const LatentGrid zt = random_grid(4, 2, 2, 2), eps = random_grid(5, 2, 2, 2);
    const LatentGrid a = ddpm_step(zt, eps, 0, xi, s);
    const LatentGrid b = ddpm_step(zt, eps, 0, LatentGrid(2, 2, 2), s);
    CHECK(a == b);

    // beta 0.02, abar 0.9, abar_prev 0.92 taken as given; z 0.5, eps 0.3, xi -1.2
    // evaluated offline at 40 digits.
    const DdpmCoefficients k{0.98, 0.02, 0.9, 0.92};
    CHECK(k.sigma() == doctest::Approx(0.126491106406735173).epsilon(1e-12));
    CHECK(ddpm_update(scalar(0.5), scalar(0.3), scalar(-1.2), k).at(0, 0, 0) ==
          doctest::Approx(0.334120647638024969).epsilon(1e-12));
}

TEST_CASE("ddim_step examples") {
    const NoiseSchedule s = two_level(0.8, 0.5);
    // Offline value: sqrt(0.8) * (0.7 + sqrt(0.5) 0.4) / sqrt(0.5) + sqrt(0.2) (-0.4).
    CHECK(ddim_step(scalar(0.7), scalar(-0.4), 1, 0, s).at(0, 0, 0) ==
          doctest::Approx(1.06432318304712939).epsilon(1e-12));
    CHECK(ddim_step(scalar(0.7), scalar(-0.4), 1, -1, s) == predict_z0(scalar(0.7), scalar(-0.4), 1, s));

    NoiseSchedule flat = two_level(0.6, 0.6);
    const LatentGrid zt = random_grid(8, 1, 3, 3), eps = random_grid(9, 1, 3, 3);
    CHECK(ddim_step(zt, eps, 1, 0, flat) == zt);

    CHECK_THROWS_AS(ddim_step(zt, eps, 1, 1, s), IndexOutOfRange);
}

TEST_CASE("ddim z0 estimates converge monotonically with the analytic model") {
    const NoiseSchedule s = sd_schedule();
    const AnalyticGaussianModel m{LatentGrid(1, 40, 50, 0.8), 0.6};
    LatentGrid z = random_grid(17, 1, 40, 50);
    const auto ts = inference_timesteps(1000, 50);
    std::vector<LatentGrid> estimates;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const LatentGrid eps = analytic_eps(m, z, ts[i], s);
        estimates.push_back(predict_z0(z, eps, ts[i], s));
        z = ddim_step(z, eps, ts[i], i + 1 < ts.size() ? ts[i + 1] : -1, s);
    }
    CHECK(z == estimates.back());
    double prev = 1e300;
    for (const auto& e : estimates) {
        double mse = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) mse += (e.data()[i] - z.data()[i]) * (e.data()[i] - z.data()[i]);
        CHECK(mse <= prev);
        prev = mse;
    }
}

TEST_CASE("inference_timesteps") {
    const auto ts = inference_timesteps(1000, 50);
    CHECK(ts.size() == 50);
    CHECK(ts.front() == 980);
    CHECK(ts.back() == 0);
    const auto full = inference_timesteps(1000, 1000);
    CHECK(full.front() == 999);
    CHECK_THROWS_AS(inference_timesteps(10, 11), InvalidConfig);
}

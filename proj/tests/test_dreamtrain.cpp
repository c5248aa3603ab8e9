#include <doctest.h>

#include "recat/dreamtrain.hpp"
#include "recat/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace recat;
using recat::test::dot;
using recat::test::random_duo;
using recat::test::random_grid;
using recat::test::rel_err;

namespace {

const NoiseSchedule& sched() {
    static const NoiseSchedule s = build_schedule(ScheduleKind::scaled_linear, 1000, 8.5e-4, 1.2e-2);
    return s;
}

NoiseSchedule single_level(double alpha_bar) {
    NoiseSchedule s;
    s.alpha_bar = {alpha_bar};
    s.alpha = {alpha_bar};
    s.beta = {1.0 - alpha_bar};
    return s;
}

const DatasetSplit& toy() {
    static const DatasetSplit d = gen_dataset(5, 24, 8, ToyDataParams{});
    return d;
}

TinyUNet small_net(std::uint64_t seed = 1) {
    TinyUNetConfig c;
    c.features = 8;
    return TinyUNet(TinyUNetParams::init(c, seed));
}

ParamSet random_direction(const ParamSet& like, std::uint64_t seed) {
    ParamSet d = like.zeros_like();
    CounterRng rng(seed, {0xd1});
    for (auto& t : d.tensors())
        for (double& v : t.values) v = rng.normal();
    return d;
}

double param_dot(const ParamSet& a, const ParamSet& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += dot(a[i].values, b[i].values);
    return s;
}

// (f(theta + h d) - f(theta - h d)) / 2h
template <class F>
double directional_fd(TinyUNet& net, const ParamSet& dir, double h, F&& f) {
    const ParamSet base = net.params().tensors;
    auto shifted = [&](double k) {
        ParamSet& p = net.mutable_params().tensors;
        for (std::size_t ti = 0; ti < p.size(); ++ti)
            for (std::size_t i = 0; i < p[ti].values.size(); ++i)
                p[ti].values[i] = base[ti].values[i] + k * dir[ti].values[i];
        return f();
    };
    const double plus = shifted(h), minus = shifted(-h);
    net.mutable_params().tensors = base;
    return (plus - minus) / (2.0 * h);
}

std::vector<const ToyScene*> first_scenes(std::size_t n) {
    std::vector<const ToyScene*> b;
    for (std::size_t i = 0; i < n; ++i) b.push_back(&toy().train[i]);
    return b;
}

}  // namespace

TEST_CASE("omega_t") {
    for (int t : {0, 1, 500, 999}) CHECK(omega_t(0.0, t, sched()) == 1.0);
    CHECK(omega_t(10.0, 0, single_level(0.75)) == 0.0009765625);
    double prev = -1.0;
    for (int t = 0; t < 1000; ++t) {
        const double w = omega_t(10.0, t, sched());
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        CHECK(w > prev);
        prev = w;
    }
    CHECK_THROWS_AS(omega_t(-1.0, 0, sched()), InvalidConfig);
}

TEST_CASE("dream_target and rectify_input") {
    const LatentGrid eb = random_grid(1, 2, 3, 4), es = random_grid(2, 2, 3, 4);
    CHECK(dream_target(eb, eb, 0.7) == eb);
    CHECK(dream_target(eb, es, 0.0) == eb);
    CHECK(dream_target(LatentGrid(1, 1, 1, 1.0), LatentGrid(1, 1, 1, 0.4), 0.5).at(0, 0, 0) ==
          doctest::Approx(1.3).epsilon(1e-15));
    CHECK_THROWS_AS(dream_target(eb, random_grid(2, 2, 3, 3), 1.0), ShapeMismatch);

    const DuoGrid z = random_duo(3, 2, 3, 4);
    CHECK(rectify_input(z, eb, eb, 2.0, 400, sched()) == z);
    const DuoGrid r = rectify_input(z, eb, es, 0.3, 400, sched());
    CHECK(garment_region(r) == garment_region(z));
    const double k = std::sqrt(1.0 - sched().alpha_bar[400]) * 0.3;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t w = 0; w < 4; ++w)
                CHECK(r.grid().at(c, h, w) ==
                      doctest::Approx(z.grid().at(c, h, w) + k * (eb.at(c, h, w) - es.at(c, h, w))).epsilon(1e-15));

    const DuoGrid one = rectify_input(DuoGrid(LatentGrid(1, 2, 1), 1), LatentGrid(1, 1, 1, 1.0), LatentGrid(1, 1, 1),
                                      2.0, 0, single_level(0.36));
    CHECK(one.grid().at(0, 0, 0) == doctest::Approx(1.6).epsilon(1e-15));
    CHECK(one.grid().at(0, 1, 0) == 0.0);
    CHECK_THROWS_AS(rectify_input(z, random_grid(1, 2, 2, 4), es, 1.0, 0, sched()), ShapeMismatch);
}

TEST_CASE("outfit-only loss") {
    DuoGrid pred(LatentGrid(1, 2, 2), 1);
    pred.grid().at(0, 0, 0) = 0.3;
    pred.grid().at(0, 0, 1) = -0.1;
    pred.grid().at(0, 1, 0) = 50.0;
    const RegionLoss l = outfit_only_loss(pred, LatentGrid(1, 1, 2));
    CHECK(l.value == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(l.grad.grid().at(0, 0, 0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(l.grad.grid().at(0, 0, 1) == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(l.grad.grid().at(0, 1, 0) == 0.0);
    CHECK(l.grad.grid().at(0, 1, 1) == 0.0);

    DuoGrid exact = random_duo(4, 3, 5, 2);
    const LatentGrid tgt = person_region(exact);
    for (std::size_t c = 0; c < 3; ++c)
        for (double& v : exact.garment_rows(c)) v = 1e6;
    const RegionLoss z = outfit_only_loss(exact, tgt);
    CHECK(z.value == 0.0);
    for (double v : z.grad.grid().data()) CHECK(v == 0.0);

    const DuoGrid p = random_duo(5, 3, 5, 2), full_t = random_duo(6, 3, 5, 2);
    const RegionLoss f = full_region_loss(p, full_t);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.grid().size(); ++i) {
        const double e = p.grid().data()[i] - full_t.grid().data()[i];
        acc += e * e;
        CHECK(f.grad.grid().data()[i] == doctest::Approx(2.0 * e / 60.0).epsilon(1e-14));
    }
    CHECK(f.value == doctest::Approx(acc / 60.0).epsilon(1e-14));
    CHECK_THROWS_AS(outfit_only_loss(p, random_grid(1, 3, 4, 2)), ShapeMismatch);
}

TEST_CASE("garment-row prediction perturbations change no parameter gradient") {
    const TinyUNet net = small_net();
    TrainConfig cfg;
    cfg.dropout_p = 0.5;
    for (std::uint64_t idx = 0; idx < 6; ++idx) {
        const ToyScene& sc = toy().train[idx];
        const SampleGradient base = sample_gradient(net, sc, cfg, sched(), 3, idx);
        for (double amount : {1000.0, -1000.0}) {
            SampleOptions opts;
            opts.prediction_hook = [&](DuoGrid& pred) {
                for (std::size_t c = 0; c < pred.channels(); ++c)
                    for (double& v : pred.garment_rows(c)) v += amount;
            };
            const SampleGradient moved = sample_gradient(net, sc, cfg, sched(), 3, idx, opts);
            CHECK(moved.loss.loss == base.loss.loss);
            CHECK(moved.grad == base.grad);
        }
    }
    TrainConfig full = cfg;
    full.loss_region = LossRegion::full;
    SampleOptions opts;
    opts.prediction_hook = [](DuoGrid& pred) { pred.garment_rows(0)[0] += 1.0; };
    CHECK_FALSE(sample_gradient(net, toy().train[0], full, sched(), 0, 0, opts).grad ==
                sample_gradient(net, toy().train[0], full, sched(), 0, 0).grad);
}

TEST_CASE("stop-gradient pass") {
    const TinyUNet net = small_net(2);
    const TinyUNet copy(net.params());
    TrainConfig cfg;
    for (LossRegion region : {LossRegion::person, LossRegion::full}) {
        cfg.loss_region = region;
        SampleOptions opts;
        opts.frozen = &copy;
        for (std::uint64_t i = 0; i < 3; ++i) {
            const SampleGradient a = sample_gradient(net, toy().train[i], cfg, sched(), 1, i);
            const SampleGradient b = sample_gradient(net, toy().train[i], cfg, sched(), 1, i, opts);
            CHECK(a.grad == b.grad);
            CHECK(a.loss.loss == b.loss.loss);
        }
    }
}

TEST_CASE("sample gradient matches finite differences with the frozen pass held constant") {
    for (LossRegion region : {LossRegion::person, LossRegion::full}) {
        TinyUNet net = small_net(3);
        const TinyUNet frozen(net.params());
        TrainConfig cfg;
        cfg.loss_region = region;
        cfg.lambda = 2.0;
        SampleOptions opts;
        opts.frozen = &frozen;
        for (std::uint64_t i = 0; i < 3; ++i) {
            const ToyScene& sc = toy().train[i];
            const SampleGradient g = sample_gradient(net, sc, cfg, sched(), 7, i, opts);
            const ParamSet dir = random_direction(g.grad, 100 + i);
            const double fd = directional_fd(net, dir, 1e-6, [&] {
                return sample_gradient(net, sc, cfg, sched(), 7, i, opts).loss.loss;
            });
            INFO("t=" << g.loss.t_sampled << " w=" << g.loss.omega_t_value);
            CHECK(rel_err(fd, param_dot(g.grad, dir)) < 1e-4);
        }
    }
}

TEST_CASE("train_step applies the gradient of the batch loss") {
    TinyUNet net = small_net(4);
    const TinyUNet frozen(net.params());
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.grad_accum = 2;
    cfg.dropout_p = 0.3;
    const auto batch = first_scenes(4);
    const ParamSet g = test::train_step_gradient(net, batch, cfg, sched());
    for (std::uint64_t k = 0; k < 3; ++k) {
        const ParamSet dir = random_direction(g, 200 + k);
        const double fd = directional_fd(net, dir, 1e-6, [&] { return test::batch_loss(net, batch, cfg, sched(), frozen); });
        CHECK(rel_err(fd, param_dot(g, dir)) < 1e-4);
    }
    TrainConfig plain = cfg;
    plain.dream = false;
    const ParamSet gp = test::train_step_gradient(net, batch, plain, sched());
    const ParamSet dir = random_direction(gp, 300);
    const double fd = directional_fd(net, dir, 1e-6, [&] { return test::batch_loss(net, batch, plain, sched(), frozen); });
    CHECK(rel_err(fd, param_dot(gp, dir)) < 1e-4);
}

TEST_CASE("micro-batches are averaged") {
    const TinyUNet net = small_net(5);
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.grad_accum = 2;
    const auto batch = first_scenes(6);
    ParamSet mean = net.params().tensors.zeros_like();
    for (std::size_t i = 0; i < 6; ++i) mean.accumulate(sample_gradient(net, *batch[i], cfg, sched(), 0, i).grad);
    mean.scale(1.0 / 6.0);
    double sq = 0.0;
    for (const auto& t : mean.tensors())
        for (double v : t.values) sq += v * v;
    TinyUNet work(net.params());
    AdamWState st;
    const StepReport r = train_step(work, st, batch, cfg, sched());
    CHECK(r.grad_norm == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
    CHECK(r.step == 1);
    CHECK(st.step == 1);
    CHECK_THROWS_AS(train_step(work, st, first_scenes(5), cfg, sched()), InvalidConfig);
}

TEST_CASE("condition dropout") {
    const ToyScene& sc = toy().train[0];
    const DuoGrid zt = random_duo(7, 4, 32, 24);
    const ModelInput cond = assemble_conditional_input(zt, sc.mask, sc.person_masked, sc.garment);
    for (ConditioningVariant v : {ConditioningVariant::CatVTON, ConditioningVariant::ReCatVTON}) {
        const ModelInput uncond = assemble_unconditional_input(v, zt, sc.mask, sc.person_masked);
        CounterRng rng(1, {2});
        for (int i = 0; i < 50; ++i) {
            bool d = true;
            CHECK(cond_dropout(rng, 0.0, v, zt, sc.mask, sc.person_masked, sc.garment, &d) == cond);
            CHECK_FALSE(d);
            CHECK(cond_dropout(rng, 1.0, v, zt, sc.mask, sc.person_masked, sc.garment, &d) == uncond);
            CHECK(d);
        }
    }
    const DuoGrid tiny = random_duo(8, 1, 1, 1);
    const RegionMask m(LatentGrid(1, 1, 1, 1.0));
    const LatentGrid zp(1, 1, 1), zg(1, 1, 1, 0.5);
    CounterRng rng(3, {4});
    int drops = 0;
    for (int i = 0; i < 100000; ++i) {
        bool d = false;
        cond_dropout(rng, 0.1, ConditioningVariant::ReCatVTON, tiny, m, zp, zg, &d);
        drops += d;
    }
    CHECK(drops >= 9400);
    CHECK(drops <= 10600);

    TrainConfig cfg;
    int sample_drops = 0;
    for (std::uint64_t i = 0; i < 2000; ++i) {
        CounterRng r(cfg.seed, {13, 0, i});
        sample_drops += r.uniform() < 0.1;
    }
    CHECK(sample_drops > 140);
    CHECK(sample_drops < 260);
}

TEST_CASE("adamw examples") {
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.1;
    ParamSet p = TinyUNetParams::init(TinyUNetConfig{1, 4, 4, 2, 10}, 1).tensors;
    const ParamSet p0 = p;
    AdamWState st;
    adamw_step(st, p, p.zeros_like(), cfg);
    for (std::size_t ti = 0; ti < p.size(); ++ti)
        for (std::size_t i = 0; i < p[ti].values.size(); ++i)
            CHECK(p[ti].values[i] == doctest::Approx(p0[ti].values[i] * (1.0 - 1e-3 * 0.1)).epsilon(1e-15));

    cfg.weight_decay = 0.0;
    p = p0;
    st = AdamWState{};
    ParamSet g = random_direction(p, 9);
    adamw_step(st, p, g, cfg);
    for (std::size_t ti = 0; ti < p.size(); ++ti)
        for (std::size_t i = 0; i < p[ti].values.size(); ++i) {
            const double gv = g[ti].values[i];
            CHECK(p[ti].values[i] - p0[ti].values[i] == doctest::Approx(-1e-3 * gv / (std::abs(gv) + 1e-8)).epsilon(1e-12));
        }
    CHECK_THROWS_AS(adamw_step(st, p, TinyUNetParams::init(TinyUNetConfig{}, 1).tensors, cfg), ShapeMismatch);
}

TEST_CASE("adamw matches a scalar loop oracle") {
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.weight_decay = 0.05;
    cfg.beta1 = 0.8;
    cfg.beta2 = 0.95;
    cfg.frozen_prefixes = {"rb1"};
    ParamSet p = TinyUNetParams::init(TinyUNetConfig{1, 4, 4, 2, 10}, 2).tensors;
    ParamSet ref = p;
    std::vector<std::vector<double>> m(p.size()), v(p.size());
    for (std::size_t ti = 0; ti < p.size(); ++ti) m[ti].assign(p[ti].values.size(), 0.0), v[ti] = m[ti];
    AdamWState st;
    for (int k = 1; k <= 6; ++k) {
        const ParamSet g = random_direction(p, 40 + static_cast<std::uint64_t>(k));
        adamw_step(st, p, g, cfg);
        for (std::size_t ti = 0; ti < p.size(); ++ti) {
            if (ref[ti].name.rfind("rb1", 0) == 0) continue;
            for (std::size_t i = 0; i < ref[ti].values.size(); ++i) {
                double& th = ref[ti].values[i];
                const double gi = g[ti].values[i];
                m[ti][i] = 0.8 * m[ti][i] + 0.2 * gi;
                v[ti][i] = 0.95 * v[ti][i] + 0.05 * gi * gi;
                const double step = m[ti][i] / (1.0 - std::pow(0.8, k)) /
                                    (std::sqrt(v[ti][i] / (1.0 - std::pow(0.95, k))) + 1e-8);
                th = th - 3e-3 * step - 3e-3 * 0.05 * th;
            }
        }
    }
    CHECK(st.step == 6);
    for (std::size_t ti = 0; ti < p.size(); ++ti)
        for (std::size_t i = 0; i < p[ti].values.size(); ++i)
            CHECK(std::abs(p[ti].values[i] - ref[ti].values[i]) < 1e-12);
    CHECK(p.find("rb1.conv1.weight")->values == TinyUNetParams::init(TinyUNetConfig{1, 4, 4, 2, 10}, 2).tensors.find("rb1.conv1.weight")->values);
}

TEST_CASE("gradient clipping") {
    ParamSet g;
    g.add("a", {2});
    g[0].values = {3.0, 4.0};
    CHECK(clip_grad_norm(g, 1.0) == 5.0);
    CHECK(g[0].values[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(g[0].values[1] == doctest::Approx(0.8).epsilon(1e-15));
    g[0].values = {0.3, 0.4};
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g[0].values == std::vector<double>{0.3, 0.4});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ParamSet r = random_direction(TinyUNetParams::zeros(TinyUNetConfig{1, 4, 4, 2, 10}).tensors, seed);
        const double scale = 0.01 * static_cast<double>(seed);
        r.scale(scale);
        const double max = 1.0;
        const double before = clip_grad_norm(r, max);
        double sq = 0.0;
        for (const auto& t : r.tensors())
            for (double v : t.values) sq += v * v;
        CHECK(std::abs(std::sqrt(sq) - std::min(before, max)) < 1e-10);
    }
    CHECK_THROWS_AS(clip_grad_norm(g, 0.0), InvalidConfig);
}

TEST_CASE("disabling DREAM reduces to plain person-region noise MSE") {
    const TinyUNet net = small_net(6);
    TrainConfig cfg;
    cfg.dream = false;
    cfg.dropout_p = 0.0;
    for (std::uint64_t i = 0; i < 3; ++i) {
        const ToyScene& sc = toy().train[i];
        const SampleGradient g = sample_gradient(net, sc, cfg, sched(), 2, i);
        CHECK(g.loss.omega_t_value == 0.0);
        const int t = g.loss.t_sampled;
        LatentGrid eps(4, 64, 24);
        CounterRng(cfg.seed, {12, 2, i}).fill_normal(eps.data());
        const DuoGrid zt(forward_diffuse(spatial_concat(sc.person_full, sc.garment).grid(), t, eps, sched()), 32);
        const DuoGrid pred = net.forward(assemble_conditional_input(zt, sc.mask, sc.person_masked, sc.garment), t);
        double acc = 0.0;
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t h = 0; h < 32; ++h)
                for (std::size_t w = 0; w < 24; ++w) {
                    const double e = pred.grid().at(c, h, w) - eps.at(c, h, w);
                    acc += e * e;
                }
        CHECK(g.loss.loss == doctest::Approx(acc / (4.0 * 32 * 24)).epsilon(1e-13));
    }
    // lambda = 0 keeps the rectification at unit weight
    TrainConfig zero;
    zero.lambda = 0.0;
    CHECK(sample_gradient(net, toy().train[0], zero, sched(), 0, 0).loss.omega_t_value == 1.0);
}

TEST_CASE("training is deterministic and thread-count independent") {
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 2;
    cfg.grad_accum = 2;
    cfg.seed = 17;
    std::vector<ParamSet> results;
    for (int threads : {1, 1, 3}) {
        TinyUNet net = small_net(7);
        AdamWState st;
        std::vector<double> losses;
        train(net, st, toy().train, cfg, sched(), 4, threads, [&](const StepReport& r) { losses.push_back(r.loss); });
        CHECK(losses.size() == 4);
        CHECK(st.step == 4);
        results.push_back(net.params().tensors);
    }
    CHECK(results[0] == results[1]);
    CHECK(results[0] == results[2]);

    const auto a = batch_indices(cfg, 5, 24), b = batch_indices(cfg, 5, 24);
    CHECK(a == b);
    CHECK(a.size() == 4);
    for (auto i : a) CHECK(i < 24);
    CHECK_FALSE(batch_indices(cfg, 6, 24) == a);
    CHECK_THROWS_AS(batch_indices(cfg, 0, 0), InvalidConfig);
}

TEST_CASE("training lowers held-out person-region noise MSE") {
    TrainConfig eval_cfg;
    eval_cfg.dream = false;
    eval_cfg.dropout_p = 0.0;
    auto held_out = [&](const TinyUNet& net) {
        double acc = 0.0;
        for (std::size_t i = 0; i < toy().test_paired.size(); ++i)
            for (std::uint64_t k = 0; k < 4; ++k)
                acc += sample_gradient(net, toy().test_paired[i], eval_cfg, sched(), 1000 + k, i).loss.person_mse;
        return acc;
    };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TinyUNet net = small_net(seed);
        TrainConfig cfg;
        cfg.lr = 2e-3;
        cfg.batch_size = 2;
        cfg.grad_accum = 1;
        cfg.seed = seed;
        const double before = held_out(net);
        AdamWState st;
        train(net, st, toy().train, cfg, sched(), 150);
        CHECK(held_out(net) < before);
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto key_of = [](TrainConfig c) {
        try {
            c.validate();
        } catch (const ValidationError& e) {
            return e.key();
        }
        return std::string();
    };
    TrainConfig c = cfg;
    c.dropout_p = 1.5;
    CHECK(key_of(c) == "train.dropout_p");
    c = cfg;
    c.lambda = -1.0;
    CHECK(key_of(c) == "train.lambda");
    c = cfg;
    c.batch_size = 0;
    CHECK(key_of(c) == "train.batch");
    c = cfg;
    c.grad_clip_norm = 0.0;
    CHECK(key_of(c) == "train.grad_clip");
    CHECK(parse_loss_region("person") == LossRegion::person);
    CHECK(to_string(LossRegion::full) == "full");
    CHECK_THROWS_AS(parse_loss_region("garment"), InvalidConfig);
}

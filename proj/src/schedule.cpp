#include "recat/schedule.hpp"

#include <cmath>

#include "recat/error.hpp"

namespace recat {

namespace {

void check_index(const NoiseSchedule& s, int t, const char* op) {
    if (t < 0 || t >= s.steps())
        throw IndexOutOfRange(std::string(op) + ": timestep " + std::to_string(t) +
                              " outside [0, " + std::to_string(s.steps()) + ")");
}

void check_same(const LatentGrid& a, const LatentGrid& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

}  // namespace

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "scaled_linear") return ScheduleKind::scaled_linear;
    throw InvalidConfig("unknown schedule kind '" + s + "'");
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "scaled_linear";
}

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t == -1) return 1.0;
    if (t < -1 || t >= steps())
        throw IndexOutOfRange("alpha_bar index " + std::to_string(t));
    return alpha_bar[static_cast<std::size_t>(t)];
}

NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_start, double beta_end) {
    if (T < 1) throw InvalidConfig("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidConfig("schedule needs 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.kind = kind;
    const auto n = static_cast<std::size_t>(T);
    s.beta.resize(n);
    s.alpha.resize(n);
    s.alpha_bar.resize(n);
    const double denom = T > 1 ? static_cast<double>(T - 1) : 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double frac = static_cast<double>(t) / denom;
        if (kind == ScheduleKind::linear) {
            s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        } else {
            const double r = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
            s.beta[t] = r * r;
        }
    }
    s.beta.front() = beta_start;
    if (T > 1) s.beta.back() = beta_end;
    double prod = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

LatentGrid forward_diffuse(const LatentGrid& z0, int t, const LatentGrid& eps,
                           const NoiseSchedule& s) {
    check_same(z0, eps, "forward_diffuse");
    check_index(s, t, "forward_diffuse");
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    LatentGrid out(z0.channels(), z0.height(), z0.width());
    auto o = out.data();
    auto x = z0.data();
    auto e = eps.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * e[i];
    return out;
}

LatentGrid predict_z0(const LatentGrid& zt, const LatentGrid& eps_hat, int t,
                      const NoiseSchedule& s) {
    check_same(zt, eps_hat, "predict_z0");
    check_index(s, t, "predict_z0");
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    LatentGrid out(zt.channels(), zt.height(), zt.width());
    auto o = out.data();
    auto z = zt.data();
    auto e = eps_hat.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (z[i] - b * e[i]) / a;
    return out;
}

double DdpmCoefficients::sigma() const {
    const double var = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta;
    return var > 0.0 ? std::sqrt(var) : 0.0;
}

LatentGrid ddpm_update(const LatentGrid& zt, const LatentGrid& eps_hat, const LatentGrid& xi,
                       const DdpmCoefficients& k) {
    check_same(zt, eps_hat, "ddpm_step");
    check_same(zt, xi, "ddpm_step");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(k.alpha);
    const double eps_coef = k.beta / std::sqrt(1.0 - k.alpha_bar);
    const double sigma = k.sigma();
    LatentGrid out(zt.channels(), zt.height(), zt.width());
    auto o = out.data();
    auto z = zt.data();
    auto e = eps_hat.data();
    auto n = xi.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = inv_sqrt_alpha * (z[i] - eps_coef * e[i]);
        if (sigma > 0.0) o[i] += sigma * n[i];
    }
    return out;
}

LatentGrid ddpm_step(const LatentGrid& zt, const LatentGrid& eps_hat, int t,
                     const LatentGrid& xi, const NoiseSchedule& s) {
    return ddpm_step_between(zt, eps_hat, t, t - 1, xi, s);
}

LatentGrid ddpm_step_between(const LatentGrid& zt, const LatentGrid& eps_hat, int t, int t_prev,
                             const LatentGrid& xi, const NoiseSchedule& s) {
    check_index(s, t, "ddpm_step");
    if (t_prev < -1 || t_prev >= t)
        throw IndexOutOfRange("ddpm_step: previous timestep " + std::to_string(t_prev) +
                              " must lie in [-1, " + std::to_string(t) + ")");
    const auto ut = static_cast<std::size_t>(t);
    DdpmCoefficients k;
    k.alpha_bar = s.alpha_bar[ut];
    k.alpha_bar_prev = s.alpha_bar_at(t_prev);
    if (t_prev == t - 1) {
        k.alpha = s.alpha[ut];
        k.beta = s.beta[ut];
    } else {
        k.alpha = k.alpha_bar / k.alpha_bar_prev;
        k.beta = 1.0 - k.alpha;
    }
    return ddpm_update(zt, eps_hat, xi, k);
}

LatentGrid ddim_step(const LatentGrid& zt, const LatentGrid& eps_hat, int t, int t_prev,
                     const NoiseSchedule& s) {
    check_index(s, t, "ddim_step");
    if (t_prev < -1 || t_prev >= t)
        throw IndexOutOfRange("ddim_step: previous timestep " + std::to_string(t_prev) +
                              " must lie in [-1, " + std::to_string(t) + ")");
    LatentGrid z0 = predict_z0(zt, eps_hat, t, s);
    if (t_prev == -1) return z0;
    const double ab_prev = s.alpha_bar[static_cast<std::size_t>(t_prev)];
    if (ab_prev == s.alpha_bar[static_cast<std::size_t>(t)]) return zt;
    const double a = std::sqrt(ab_prev);
    const double b = std::sqrt(1.0 - ab_prev);
    auto o = z0.data();
    auto e = eps_hat.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * o[i] + b * e[i];
    return z0;
}

std::vector<int> inference_timesteps(int T, int n) {
    if (n < 1 || n > T)
        throw InvalidConfig("inference steps must lie in [1, T]");
    std::vector<int> ts(static_cast<std::size_t>(n));
    const int stride = T / n;
    for (int i = 0; i < n; ++i) ts[static_cast<std::size_t>(i)] = (n - 1 - i) * stride;
    return ts;
}

}  // namespace recat

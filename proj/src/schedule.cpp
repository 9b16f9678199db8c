#include "vidtune/schedule.hpp"

#include <cmath>

namespace vidtune {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty())
        throw std::invalid_argument("NoiseSchedule: needs at least one step");
    alphas_.resize(betas_.size());
    alpha_bars_.resize(betas_.size());
    beta_tildes_.resize(betas_.size());
    double bar = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        double b = betas_[i];
        if (!(b > 0.0 && b < 1.0))
            throw std::invalid_argument("NoiseSchedule: betas must lie in (0, 1)");
        double prev_bar = bar;
        alphas_[i] = 1.0 - b;
        bar *= alphas_[i];
        alpha_bars_[i] = bar;
        // (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t; zero at t = 1
        // because alpha_bar_0 == 1.
        beta_tildes_[i] = (1.0 - prev_bar) / (1.0 - bar) * b;
    }
}

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 1)
        throw std::invalid_argument("build_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");

    std::vector<double> betas(static_cast<std::size_t>(T));
    if (T == 1) {
        betas[0] = beta_start;
    } else {
        double s0 = std::sqrt(beta_start);
        double s1 = std::sqrt(beta_end);
        for (int t = 1; t <= T; ++t) {
            double s = s0 + static_cast<double>(t - 1) / (T - 1) * (s1 - s0);
            betas[t - 1] = s * s;
        }
        // endpoints exact regardless of rounding in the interpolation
        betas.front() = beta_start;
        betas.back() = beta_end;
    }
    return NoiseSchedule(std::move(betas));
}

namespace {

int check_time(TimeIndex t, const NoiseSchedule& sched, int min_t) {
    if (t.T != sched.steps())
        throw std::invalid_argument("schedule op: TimeIndex horizon does not match schedule");
    if (t.t < min_t)
        throw std::invalid_argument("schedule op: step out of range");
    return t.t;
}

}  // namespace

LatentFrame forward_step(const LatentFrame& x_prev, TimeIndex t, const LatentFrame& noise,
                         const NoiseSchedule& sched) {
    int step = check_time(t, sched, 1);
    require_same_shape(x_prev, noise, "forward_step");
    return combine(std::sqrt(sched.alpha(step)), x_prev, std::sqrt(sched.beta(step)), noise);
}

LatentFrame forward_jump(const LatentFrame& x0, TimeIndex t, const LatentFrame& noise,
                         const NoiseSchedule& sched) {
    int step = check_time(t, sched, 0);
    require_same_shape(x0, noise, "forward_jump");
    double bar = sched.alpha_bar(step);
    return combine(std::sqrt(bar), x0, std::sqrt(1.0 - bar), noise);
}

LatentFrame posterior_mean(const LatentFrame& x0, const LatentFrame& xt, TimeIndex t,
                           const NoiseSchedule& sched) {
    int step = check_time(t, sched, 1);
    require_same_shape(x0, xt, "posterior_mean");
    double bar_prev = sched.alpha_bar(step - 1);
    double bar = sched.alpha_bar(step);
    double c0 = std::sqrt(bar_prev) * sched.beta(step) / (1.0 - bar);
    double ct = std::sqrt(sched.alpha(step)) * (1.0 - bar_prev) / (1.0 - bar);
    return combine(c0, x0, ct, xt);
}

LatentFrame predict_x0(const LatentFrame& xt, const LatentFrame& eps_pred, TimeIndex t,
                       const NoiseSchedule& sched) {
    int step = check_time(t, sched, 1);
    require_same_shape(xt, eps_pred, "predict_x0");
    double bar = sched.alpha_bar(step);
    double inv = 1.0 / std::sqrt(bar);
    return combine(inv, xt, -std::sqrt(1.0 - bar) * inv, eps_pred);
}

LatentFrame ddim_step(const LatentFrame& xt, TimeIndex t, const LatentFrame& eps_pred,
                      double sigma_t, const LatentFrame* extra_noise,
                      const NoiseSchedule& sched) {
    int step = check_time(t, sched, 1);
    require_same_shape(xt, eps_pred, "ddim_step");
    double bar_prev = sched.alpha_bar(step - 1);
    double var = sigma_t * sigma_t;
    if (sigma_t < 0.0 || var > 1.0 - bar_prev)
        throw std::invalid_argument("ddim_step: sigma_t^2 must lie in [0, 1 - alpha_bar_{t-1}]");

    LatentFrame x0_hat = predict_x0(xt, eps_pred, t, sched);
    LatentFrame out = combine(std::sqrt(bar_prev), x0_hat,
                              std::sqrt(1.0 - bar_prev - var), eps_pred);
    if (sigma_t != 0.0) {
        if (extra_noise == nullptr)
            throw std::invalid_argument("ddim_step: sigma_t > 0 requires extra noise");
        out = combine(1.0, out, sigma_t, *extra_noise);
    }
    return out;
}

}  // namespace vidtune

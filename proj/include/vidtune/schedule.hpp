#pragma once

#include <vector>

#include "vidtune/frame.hpp"

namespace vidtune {

/// Diffusion step index t together with the horizon T it lives under.
/// t = 0 is the clean sample, t = T is (nearly) pure noise.
struct TimeIndex {
    int t = 0;
    int T = 0;

    TimeIndex() = default;
    TimeIndex(int t_, int T_) : t(t_), T(T_) {
        if (T < 0 || t < 0 || t > T)
            throw std::invalid_argument("TimeIndex: t must lie in [0, T]");
    }
};

/// Per-step noise schedule tables. Steps are 1-based: beta(t) for t in [1, T],
/// alpha_bar(0) == 1 by convention so t = 1 formulas stay well defined.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_[check_step(t) - 1]; }
    double alpha(int t) const { return alphas_[check_step(t) - 1]; }
    double beta_tilde(int t) const { return beta_tildes_[check_step(t) - 1]; }

    /// Cumulative product of alphas; accepts t in [0, T] with alpha_bar(0) = 1.
    double alpha_bar(int t) const {
        if (t < 0 || t > steps())
            throw std::invalid_argument("NoiseSchedule: step out of range");
        return t == 0 ? 1.0 : alpha_bars_[t - 1];
    }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }
    const std::vector<double>& beta_tildes() const { return beta_tildes_; }

private:
    int check_step(int t) const {
        if (t < 1 || t > steps())
            throw std::invalid_argument("NoiseSchedule: step out of range");
        return t;
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> beta_tildes_;
};

/// Scaled-linear schedule: interpolate linearly in sqrt(beta), then square.
/// beta(1) = beta_start and beta(T) = beta_end exactly; T = 1 degenerates to
/// a single step at beta_start.
NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

/// One forward noising step: sqrt(alpha_t) * x_prev + sqrt(beta_t) * noise.
LatentFrame forward_step(const LatentFrame& x_prev, TimeIndex t, const LatentFrame& noise,
                         const NoiseSchedule& sched);

/// Jump straight from the clean sample to step t:
/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise. t = 0 returns x0.
LatentFrame forward_jump(const LatentFrame& x0, TimeIndex t, const LatentFrame& noise,
                         const NoiseSchedule& sched);

/// Mean of the exact reverse posterior given (x0, xt); the paired variance is
/// beta_tilde(t).
LatentFrame posterior_mean(const LatentFrame& x0, const LatentFrame& xt, TimeIndex t,
                           const NoiseSchedule& sched);

/// Invert the jump under a noise estimate:
/// (xt - sqrt(1 - alpha_bar_t) * eps_pred) / sqrt(alpha_bar_t).
LatentFrame predict_x0(const LatentFrame& xt, const LatentFrame& eps_pred, TimeIndex t,
                       const NoiseSchedule& sched);

/// One reverse sampling step from t to t-1:
///   sqrt(alpha_bar_{t-1}) * x0_hat
/// + sqrt(1 - alpha_bar_{t-1} - sigma_t^2) * eps_pred
/// + sigma_t * extra_noise.
/// sigma_t = 0 is the deterministic step and extra_noise may be null.
LatentFrame ddim_step(const LatentFrame& xt, TimeIndex t, const LatentFrame& eps_pred,
                      double sigma_t, const LatentFrame* extra_noise,
                      const NoiseSchedule& sched);

}  // namespace vidtune

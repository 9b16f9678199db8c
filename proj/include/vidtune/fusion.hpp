#pragma once

#include <cstdint>
#include <vector>

#include "vidtune/denoiser.hpp"
#include "vidtune/schedule.hpp"
#include "vidtune/segmentation.hpp"

namespace vidtune {

/// Per-step noise scale for reverse sampling: sigma_t = eta * sqrt(beta_tilde_t).
/// eta = 0 is the deterministic sampler.
struct SigmaPolicy {
    double eta = 0.0;

    double sigma(const NoiseSchedule& sched, int t) const {
        return eta == 0.0 ? 0.0 : eta * std::sqrt(sched.beta_tilde(t));
    }
};

/// Background-averaging parameters: n sampled backgrounds fused at step k with
/// weights w1 (background) and w2 (foreground).
struct FusionConfig {
    int n = 1;
    int k = 1;
    double w1 = 1.0;
    double w2 = 1.0;

    void validate(int T) const;
};

/// Run one seeded reverse trajectory from a fresh Gaussian latent at t = T
/// down to step k; k = T returns the initial latent untouched.
LatentFrame sample_to_step(const DenoiserModel& model, const NoiseSchedule& sched,
                           const ConditioningEmbedding& emb, std::uint64_t seed, int k,
                           SigmaPolicy sigma = {});

/// (w1 / n) * sum_i mask_bg(bg_samples[i]) + w2 * mask_fg(fg_frame).
LatentFrame average_fuse(const std::vector<LatentFrame>& bg_samples, const LatentFrame& fg_frame,
                         const MaskPair& masks, const FusionConfig& cfg);

/// Continue reverse sampling from a (possibly fused) step-k latent down to the
/// clean sample; k = 0 returns the input unchanged.
LatentFrame resume_denoise(const LatentFrame& r_k, int k, const DenoiserModel& model,
                           const NoiseSchedule& sched, const ConditioningEmbedding& emb,
                           SigmaPolicy sigma = {}, std::uint64_t noise_seed = 0);

}  // namespace vidtune

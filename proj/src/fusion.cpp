#include "vidtune/fusion.hpp"

#include "vidtune/rng.hpp"
#include "vidtune/segmentation.hpp"

namespace vidtune {

void FusionConfig::validate(int T) const {
    if (n < 1) throw std::invalid_argument("FusionConfig: n must be >= 1");
    if (k < 1 || k > T) throw std::invalid_argument("FusionConfig: k must lie in [1, T]");
    if (!std::isfinite(w1) || !std::isfinite(w2))
        throw std::invalid_argument("FusionConfig: weights must be finite");
}

namespace {

// Reverse steps t = from down to to+1, leaving a step-`to` latent. Both
// sample_to_step and resume_denoise run through here so a split trajectory is
// bit-identical to an unsplit one when sigma is zero.
LatentFrame run_reverse(LatentFrame x, int from, int to, const DenoiserModel& model,
                        const NoiseSchedule& sched, const ConditioningEmbedding& emb,
                        SigmaPolicy sigma, Rng& rng) {
    for (int t = from; t > to; --t) {
        TimeIndex ti(t, sched.steps());
        LatentFrame eps = predict_noise(model, x, ti, emb);
        double s = sigma.sigma(sched, t);
        if (s == 0.0) {
            x = ddim_step(x, ti, eps, 0.0, nullptr, sched);
        } else {
            LatentFrame extra = gaussian_frame(rng, x.height(), x.width(), x.channels());
            x = ddim_step(x, ti, eps, s, &extra, sched);
        }
    }
    return x;
}

}  // namespace

LatentFrame sample_to_step(const DenoiserModel& model, const NoiseSchedule& sched,
                           const ConditioningEmbedding& emb, std::uint64_t seed, int k,
                           SigmaPolicy sigma) {
    if (k < 0 || k > sched.steps())
        throw std::invalid_argument("sample_to_step: k must lie in [0, T]");
    Rng rng(seed);
    const ModelDims& d = model.dims();
    LatentFrame x = gaussian_frame(rng, d.height, d.width, d.channels);
    return run_reverse(std::move(x), sched.steps(), k, model, sched, emb, sigma, rng);
}

LatentFrame average_fuse(const std::vector<LatentFrame>& bg_samples, const LatentFrame& fg_frame,
                         const MaskPair& masks, const FusionConfig& cfg) {
    if (static_cast<int>(bg_samples.size()) != cfg.n)
        throw std::invalid_argument("average_fuse: sample count does not match n");
    if (!masks.fg.matches_frame(fg_frame))
        throw std::invalid_argument("average_fuse: mask shape mismatch");

    LatentFrame fused = scale(cfg.w2, apply_mask(fg_frame, masks.fg));
    double w = cfg.w1 / cfg.n;
    for (const LatentFrame& s : bg_samples) {
        require_same_shape(s, fg_frame, "average_fuse");
        fused = combine(1.0, fused, w, apply_mask(s, masks.bg));
    }
    return fused;
}

LatentFrame resume_denoise(const LatentFrame& r_k, int k, const DenoiserModel& model,
                           const NoiseSchedule& sched, const ConditioningEmbedding& emb,
                           SigmaPolicy sigma, std::uint64_t noise_seed) {
    if (k < 0 || k > sched.steps())
        throw std::invalid_argument("resume_denoise: k must lie in [0, T]");
    Rng rng(noise_seed);
    return run_reverse(r_k, k, 0, model, sched, emb, sigma, rng);
}

}  // namespace vidtune

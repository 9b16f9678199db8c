#include "vidtune/tuning.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vidtune/rng.hpp"

namespace vidtune {

void LossWeights::validate() const {
    for (double l : {lambda1, lambda2, lambda3})
        if (!std::isfinite(l) || l < 0.0)
            throw std::invalid_argument("LossWeights: lambdas must be finite and >= 0");
    if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0)
        throw std::invalid_argument("LossWeights: at least one lambda must be nonzero");
}

void TuneConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("TuneConfig: steps must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TuneConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TuneConfig: batch_size must be >= 1");
}

namespace {

struct LossTerms {
    double l1 = 0.0;
    double l_fg = 0.0;
    double l_bg = 0.0;
};

// One forward pass; per-element squared residuals are folded with each mask.
// Masks are binary so mask^2 == mask and the fg/bg terms sum to the plain one.
LossTerms residual_terms(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
                         const ConditioningEmbedding& emb, const LatentFrame& noise,
                         const NoiseSchedule& sched, const MaskPair* masks,
                         detail::ForwardCache& cache) {
    require_same_shape(x0, noise, "loss");
    LatentFrame xt = forward_jump(x0, t, noise, sched);
    detail::forward(model, detail::build_input(model.dims(), xt, t, emb, 0), cache);

    LossTerms terms;
    std::size_t i = 0;
    for (int y = 0; y < x0.height(); ++y)
        for (int x = 0; x < x0.width(); ++x) {
            for (int c = 0; c < x0.channels(); ++c, ++i) {
                double r = noise[i] - cache.out[i];
                double r2 = r * r;
                terms.l1 += r2;
                if (masks != nullptr) {
                    terms.l_fg += masks->fg.at(y, x) * r2;
                    terms.l_bg += masks->bg.at(y, x) * r2;
                }
            }
        }
    return terms;
}

}  // namespace

double loss_l1(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
               const ConditioningEmbedding& emb, const LatentFrame& noise,
               const NoiseSchedule& sched) {
    detail::ForwardCache cache;
    return residual_terms(model, x0, t, emb, noise, sched, nullptr, cache).l1;
}

double loss_masked(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
                   const ConditioningEmbedding& emb, const LatentFrame& noise,
                   const NoiseSchedule& sched, const PixelGrid& mask) {
    if (!mask.matches_frame(x0))
        throw std::invalid_argument("loss_masked: mask shape mismatch");
    detail::ForwardCache cache;
    LatentFrame xt = forward_jump(x0, t, noise, sched);
    detail::forward(model, detail::build_input(model.dims(), xt, t, emb, 0), cache);
    double loss = 0.0;
    std::size_t i = 0;
    for (int y = 0; y < x0.height(); ++y)
        for (int x = 0; x < x0.width(); ++x) {
            double m = mask.at(y, x);
            for (int c = 0; c < x0.channels(); ++c, ++i) {
                double r = m * (noise[i] - cache.out[i]);
                loss += r * r;
            }
        }
    return loss;
}

double loss_total(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
                  const ConditioningEmbedding& emb, const LatentFrame& noise,
                  const NoiseSchedule& sched, const MaskPair& masks, const LossWeights& weights) {
    weights.validate();
    detail::ForwardCache cache;
    LossTerms terms = residual_terms(model, x0, t, emb, noise, sched, &masks, cache);
    return weights.lambda1 * terms.l1 + weights.lambda2 * terms.l_fg +
           weights.lambda3 * terms.l_bg;
}

GradientResult loss_total_gradients(const DenoiserModel& model, const LatentFrame& x0,
                                    TimeIndex t, const ConditioningEmbedding& emb,
                                    const LatentFrame& noise, const NoiseSchedule& sched,
                                    const MaskPair& masks, const LossWeights& weights) {
    weights.validate();
    require_same_shape(x0, noise, "loss_total_gradients");
    if (!masks.fg.matches_frame(x0))
        throw std::invalid_argument("loss_total_gradients: mask shape mismatch");

    LatentFrame xt = forward_jump(x0, t, noise, sched);
    detail::ForwardCache cache;
    detail::forward(model, detail::build_input(model.dims(), xt, t, emb, 0), cache);

    // lambda1 + lambda2 * fg + lambda3 * bg as one per-element squared weight;
    // binary masks make this exactly the weighted sum of the three losses.
    std::vector<double> sqw(static_cast<std::size_t>(model.dims().frame_size()));
    std::size_t i = 0;
    for (int y = 0; y < x0.height(); ++y)
        for (int x = 0; x < x0.width(); ++x) {
            double w = weights.lambda1 + weights.lambda2 * masks.fg.at(y, x) +
                       weights.lambda3 * masks.bg.at(y, x);
            for (int c = 0; c < x0.channels(); ++c) sqw[i++] = w;
        }

    GradientResult result;
    result.grad.assign(model.params().size(), 0.0);
    result.loss = detail::weighted_residual_backward(model, cache, noise, sqw, 1.0, result.grad);
    return result;
}

FineTuneResult fine_tune(const DenoiserModel& model, const std::vector<LatentFrame>& targets,
                         const ConditioningEmbedding& emb, const MaskPair& masks,
                         const NoiseSchedule& sched, const LossWeights& weights,
                         const TuneConfig& cfg, std::uint64_t seed) {
    weights.validate();
    cfg.validate();
    if (targets.empty())
        throw std::invalid_argument("fine_tune: needs at least one target frame");
    for (const LatentFrame& f : targets) {
        if (!f.all_finite())
            throw std::invalid_argument("fine_tune: target frames must be finite");
        if (!masks.fg.matches_frame(f))
            throw std::invalid_argument("fine_tune: mask shape mismatch");
    }

    FineTuneResult result{model, {}};
    result.log.reserve(static_cast<std::size_t>(cfg.steps));
    Rng rng(seed);
    int T = sched.steps();

    std::vector<double> grad(model.params().size());
    detail::ForwardCache cache;
    std::vector<double> sqw(static_cast<std::size_t>(model.dims().frame_size()));

    for (int step = 1; step <= cfg.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double inv_batch = 1.0 / cfg.batch_size;
        TrainStep rec{step, 0.0, 0.0, 0.0, 0.0};

        for (int b = 0; b < cfg.batch_size; ++b) {
            const LatentFrame& x0 =
                targets[targets.size() == 1 ? 0 : rng.uniform_int(0, static_cast<int>(targets.size()) - 1)];
            TimeIndex t(rng.uniform_int(1, T), T);
            LatentFrame noise = gaussian_frame(rng, x0.height(), x0.width(), x0.channels());

            LatentFrame xt = forward_jump(x0, t, noise, sched);
            detail::forward(result.model, detail::build_input(model.dims(), xt, t, emb, 0), cache);

            std::size_t i = 0;
            double l1 = 0.0, l_fg = 0.0, l_bg = 0.0;
            for (int y = 0; y < x0.height(); ++y)
                for (int x = 0; x < x0.width(); ++x) {
                    double fg = masks.fg.at(y, x);
                    double bg = masks.bg.at(y, x);
                    double w = weights.lambda1 + weights.lambda2 * fg + weights.lambda3 * bg;
                    for (int c = 0; c < x0.channels(); ++c) {
                        double r = noise[i] - cache.out[i];
                        double r2 = r * r;
                        l1 += r2;
                        l_fg += fg * r2;
                        l_bg += bg * r2;
                        sqw[i] = w;
                        ++i;
                    }
                }
            detail::weighted_residual_backward(result.model, cache, noise, sqw, inv_batch, grad);

            rec.l1 += l1 * inv_batch;
            rec.l_fg += l_fg * inv_batch;
            rec.l_bg += l_bg * inv_batch;
        }
        rec.l_total = weights.lambda1 * rec.l1 + weights.lambda2 * rec.l_fg +
                      weights.lambda3 * rec.l_bg;
        if (!std::isfinite(rec.l_total))
            throw std::runtime_error("fine_tune: loss became nonfinite at step " +
                                     std::to_string(step));
        apply_update(result.model, grad, cfg.learning_rate);
        result.log.push_back(rec);
    }
    return result;
}

void write_training_log(const std::vector<TrainStep>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("training log: cannot open " + path + " for writing");
    os << "step\tl1\tl_fg\tl_bg\tl_total\n";
    char buf[256];
    for (const TrainStep& s : log) {
        std::snprintf(buf, sizeof(buf), "%d\t%.17g\t%.17g\t%.17g\t%.17g\n", s.step, s.l1, s.l_fg,
                      s.l_bg, s.l_total);
        os << buf;
    }
    if (!os) throw std::runtime_error("training log: write failed for " + path);
}

}  // namespace vidtune

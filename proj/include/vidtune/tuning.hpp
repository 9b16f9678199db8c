#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidtune/denoiser.hpp"
#include "vidtune/schedule.hpp"
#include "vidtune/segmentation.hpp"

namespace vidtune {

/// Weights of the combined objective: lambda1 * plain + lambda2 * foreground
/// + lambda3 * background.
struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;

    void validate() const;
};

struct TuneConfig {
    int steps = 250;
    double learning_rate = 2e-6;
    int batch_size = 1;

    void validate() const;
};

/// Plain noise-prediction loss: squared error between the drawn noise and the
/// model prediction at the jumped latent (single-sample estimator).
double loss_l1(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
               const ConditioningEmbedding& emb, const LatentFrame& noise,
               const NoiseSchedule& sched);

/// Squared norm of the Hadamard-masked residual on the same construction.
double loss_masked(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
                   const ConditioningEmbedding& emb, const LatentFrame& noise,
                   const NoiseSchedule& sched, const PixelGrid& mask);

/// Weighted sum of the plain, foreground, and background losses evaluated on
/// one shared (t, noise) draw.
double loss_total(const DenoiserModel& model, const LatentFrame& x0, TimeIndex t,
                  const ConditioningEmbedding& emb, const LatentFrame& noise,
                  const NoiseSchedule& sched, const MaskPair& masks, const LossWeights& weights);

/// Gradient of loss_total w.r.t. every parameter, single backward pass.
GradientResult loss_total_gradients(const DenoiserModel& model, const LatentFrame& x0,
                                    TimeIndex t, const ConditioningEmbedding& emb,
                                    const LatentFrame& noise, const NoiseSchedule& sched,
                                    const MaskPair& masks, const LossWeights& weights);

struct TrainStep {
    int step = 0;
    double l1 = 0.0;
    double l_fg = 0.0;
    double l_bg = 0.0;
    double l_total = 0.0;
};

struct FineTuneResult {
    DenoiserModel model;
    std::vector<TrainStep> log;
};

/// Seeded SGD on the combined objective. Each update draws, per batch item, a
/// target frame (uniform over `targets`), a step t uniform in [1, T], and a
/// unit Gaussian noise frame, all from one generator owned by this call.
FineTuneResult fine_tune(const DenoiserModel& model, const std::vector<LatentFrame>& targets,
                         const ConditioningEmbedding& emb, const MaskPair& masks,
                         const NoiseSchedule& sched, const LossWeights& weights,
                         const TuneConfig& cfg, std::uint64_t seed);

/// Tab-separated training log: header line, then one row per step.
void write_training_log(const std::vector<TrainStep>& log, const std::string& path);

}  // namespace vidtune

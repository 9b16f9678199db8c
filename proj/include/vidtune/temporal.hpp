#pragma once

#include <cstdint>
#include <vector>

#include "vidtune/denoiser.hpp"
#include "vidtune/fusion.hpp"
#include "vidtune/schedule.hpp"

namespace vidtune {

/// Overlapping-clip layout over a long video: clip i covers frames
/// [stride * i, stride * i + clip_len). Plans must tile the video exactly:
/// stride * (clip_count - 1) + clip_len == total frames.
struct ClipPlan {
    int stride = 1;     // S
    int clip_len = 1;   // K
    int clip_count = 1; // N
    /// clip_count x clip_len nonnegative per-pixel weight grids
    std::vector<std::vector<PixelGrid>> weights;

    int total_frames() const { return stride * (clip_count - 1) + clip_len; }
    int clip_start(int i) const { return stride * i; }

    /// Clips whose window contains global frame j.
    std::vector<int> covering_clips(int j) const;

    /// The clip a frame naturally belongs to when no merging is done: the
    /// latest clip starting at or before it.
    int owner_clip(int j) const;

    void validate(int frame_height, int frame_width) const;
};

/// Uniform or triangular-ramp weights, or one scalar per clip.
ClipPlan make_clip_plan(int total_frames, int clip_len, int stride, int height, int width,
                        const std::string& weight_mode = "uniform",
                        const std::vector<double>& clip_scalars = {});

/// One conditioning embedding per clip.
struct ClipEmbeddings {
    std::vector<ConditioningEmbedding> items;
};

/// Copy of frames [stride * i, stride * i + clip_len).
Video project_clip(const Video& video, const ClipPlan& plan, int i);

/// Advance every clip one reverse step independently; the denoiser runs per
/// frame with the clip's embedding and the frame's global position index.
std::vector<Video> denoise_clips(const std::vector<Video>& clips, const DenoiserModel& model,
                                 const NoiseSchedule& sched, const ClipEmbeddings& embs,
                                 const ClipPlan& plan, TimeIndex t, double sigma_t,
                                 std::uint64_t noise_seed = 0, int threads = 1);

/// Weighted least-squares recombination of overlapping clips; per pixel the
/// closed form is the weight-normalized average over covering clips.
Video merge_clips(const std::vector<Video>& clips, const ClipPlan& plan);

/// Full reverse loop over the long video: project, denoise one step, merge,
/// for t = T down to 1. Frame j of the initial Gaussian video is seeded with
/// derive_seed(seed, j).
Video generate_long_video(const DenoiserModel& model, const NoiseSchedule& sched,
                          const ClipPlan& plan, const ClipEmbeddings& embs, std::uint64_t seed,
                          SigmaPolicy sigma = {}, int threads = 1);

/// Baseline without temporal coupling: every frame sampled independently from
/// the same per-frame seeds, conditioned on its owner clip's embedding.
Video generate_frames_independent(const DenoiserModel& model, const NoiseSchedule& sched,
                                  const ClipPlan& plan, const ClipEmbeddings& embs,
                                  std::uint64_t seed, SigmaPolicy sigma = {});

}  // namespace vidtune

#include "vidtune/temporal.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>

#include "vidtune/rng.hpp"

namespace vidtune {

std::vector<int> ClipPlan::covering_clips(int j) const {
    std::vector<int> out;
    for (int i = 0; i < clip_count; ++i) {
        int start = clip_start(i);
        if (j >= start && j < start + clip_len) out.push_back(i);
    }
    return out;
}

int ClipPlan::owner_clip(int j) const {
    return std::min(j / stride, clip_count - 1);
}

void ClipPlan::validate(int frame_height, int frame_width) const {
    if (stride < 1 || clip_len < 1 || clip_count < 1)
        throw std::invalid_argument("ClipPlan: stride, clip_len, clip_count must be >= 1");
    for (int j = 0; j < total_frames(); ++j)
        if (covering_clips(j).empty())
            throw std::invalid_argument("ClipPlan: frame " + std::to_string(j) +
                                        " is covered by no clip");
    if (static_cast<int>(weights.size()) != clip_count)
        throw std::invalid_argument("ClipPlan: need one weight list per clip");
    for (const auto& clip : weights) {
        if (static_cast<int>(clip.size()) != clip_len)
            throw std::invalid_argument("ClipPlan: need one weight grid per clip frame");
        for (const PixelGrid& g : clip) {
            if (g.height() != frame_height || g.width() != frame_width)
                throw std::invalid_argument("ClipPlan: weight grid shape mismatch");
            for (std::size_t i = 0; i < g.size(); ++i)
                if (!(g[i] >= 0.0) || !std::isfinite(g[i]))
                    throw std::invalid_argument("ClipPlan: weights must be finite and >= 0");
        }
    }
}

ClipPlan make_clip_plan(int total_frames, int clip_len, int stride, int height, int width,
                        const std::string& weight_mode, const std::vector<double>& clip_scalars) {
    if (stride < 1 || clip_len < 1 || total_frames < clip_len)
        throw std::invalid_argument("make_clip_plan: invalid geometry");
    if ((total_frames - clip_len) % stride != 0)
        throw std::invalid_argument(
            "make_clip_plan: stride * (N - 1) + clip_len must equal total frames exactly");
    ClipPlan plan;
    plan.stride = stride;
    plan.clip_len = clip_len;
    plan.clip_count = (total_frames - clip_len) / stride + 1;

    if (!clip_scalars.empty() && static_cast<int>(clip_scalars.size()) != plan.clip_count)
        throw std::invalid_argument("make_clip_plan: need one scalar per clip");

    plan.weights.resize(static_cast<std::size_t>(plan.clip_count));
    for (int i = 0; i < plan.clip_count; ++i) {
        double base = clip_scalars.empty() ? 1.0 : clip_scalars[i];
        plan.weights[i].reserve(static_cast<std::size_t>(clip_len));
        for (int f = 0; f < clip_len; ++f) {
            double w = base;
            if (weight_mode == "ramp") {
                // triangular: rises toward the clip center
                w = base * (1.0 + std::min(f, clip_len - 1 - f));
            } else if (weight_mode != "uniform") {
                throw std::invalid_argument("make_clip_plan: unknown weight mode " + weight_mode);
            }
            plan.weights[i].emplace_back(height, width, w);
        }
    }
    plan.validate(height, width);
    return plan;
}

Video project_clip(const Video& video, const ClipPlan& plan, int i) {
    if (i < 0 || i >= plan.clip_count)
        throw std::invalid_argument("project_clip: clip index out of range");
    if (video.length() != plan.total_frames())
        throw std::invalid_argument("project_clip: video length does not match plan");
    Video clip;
    int start = plan.clip_start(i);
    clip.frames.assign(video.frames.begin() + start, video.frames.begin() + start + plan.clip_len);
    return clip;
}

namespace {

void for_each_clip(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int width = std::min(threads, count);
    pool.reserve(static_cast<std::size_t>(width));
    for (int i = 0; i < width; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace

std::vector<Video> denoise_clips(const std::vector<Video>& clips, const DenoiserModel& model,
                                 const NoiseSchedule& sched, const ClipEmbeddings& embs,
                                 const ClipPlan& plan, TimeIndex t, double sigma_t,
                                 std::uint64_t noise_seed, int threads) {
    if (static_cast<int>(clips.size()) != plan.clip_count)
        throw std::invalid_argument("denoise_clips: clip count does not match plan");
    if (static_cast<int>(embs.items.size()) != plan.clip_count)
        throw std::invalid_argument("denoise_clips: need one embedding per clip");

    std::vector<Video> out(clips.size());
    for_each_clip(plan.clip_count, threads, [&](int i) {
        const Video& clip = clips[static_cast<std::size_t>(i)];
        if (clip.length() != plan.clip_len)
            throw std::invalid_argument("denoise_clips: clip length mismatch");
        Video stepped;
        stepped.frames.reserve(clip.frames.size());
        for (int f = 0; f < clip.length(); ++f) {
            const LatentFrame& frame = clip.frames[static_cast<std::size_t>(f)];
            int global = plan.clip_start(i) + f;
            LatentFrame eps = predict_noise(model, frame, t, embs.items[static_cast<std::size_t>(i)], global);
            if (sigma_t == 0.0) {
                stepped.frames.push_back(ddim_step(frame, t, eps, 0.0, nullptr, sched));
            } else {
                // per (t, clip, frame) stream so results do not depend on the
                // thread count
                Rng rng(derive_seed(noise_seed,
                                    (static_cast<std::uint64_t>(t.t) << 32) ^
                                        (static_cast<std::uint64_t>(i) << 16) ^
                                        static_cast<std::uint64_t>(f)));
                LatentFrame extra = gaussian_frame(rng, frame.height(), frame.width(), frame.channels());
                stepped.frames.push_back(ddim_step(frame, t, eps, sigma_t, &extra, sched));
            }
        }
        out[static_cast<std::size_t>(i)] = std::move(stepped);
    });
    return out;
}

Video merge_clips(const std::vector<Video>& clips, const ClipPlan& plan) {
    if (static_cast<int>(clips.size()) != plan.clip_count)
        throw std::invalid_argument("merge_clips: clip count does not match plan");
    if (clips.empty() || clips[0].frames.empty())
        throw std::invalid_argument("merge_clips: empty input");

    const LatentFrame& proto = clips[0].frames[0];
    int F = plan.total_frames();
    Video merged;
    merged.frames.assign(static_cast<std::size_t>(F),
                         LatentFrame(proto.height(), proto.width(), proto.channels()));
    std::vector<LatentFrame> weight_sums(
        static_cast<std::size_t>(F), LatentFrame(proto.height(), proto.width(), proto.channels()));

    for (int i = 0; i < plan.clip_count; ++i) {
        const Video& clip = clips[static_cast<std::size_t>(i)];
        if (clip.length() != plan.clip_len)
            throw std::invalid_argument("merge_clips: clip length mismatch");
        for (int f = 0; f < plan.clip_len; ++f) {
            const LatentFrame& cf = clip.frames[static_cast<std::size_t>(f)];
            require_same_shape(cf, proto, "merge_clips");
            const PixelGrid& w = plan.weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
            int j = plan.clip_start(i) + f;
            LatentFrame& num = merged.frames[static_cast<std::size_t>(j)];
            LatentFrame& den = weight_sums[static_cast<std::size_t>(j)];
            for (int y = 0; y < proto.height(); ++y)
                for (int x = 0; x < proto.width(); ++x) {
                    double wv = w.at(y, x);
                    for (int c = 0; c < proto.channels(); ++c) {
                        num.at(y, x, c) += wv * cf.at(y, x, c);
                        den.at(y, x, c) += wv;
                    }
                }
        }
    }
    for (int j = 0; j < F; ++j) {
        LatentFrame& num = merged.frames[static_cast<std::size_t>(j)];
        const LatentFrame& den = weight_sums[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < num.size(); ++i) {
            if (den[i] <= 0.0)
                throw std::invalid_argument("merge_clips: zero total weight at a covered pixel");
            num[i] /= den[i];
        }
    }
    return merged;
}

Video generate_long_video(const DenoiserModel& model, const NoiseSchedule& sched,
                          const ClipPlan& plan, const ClipEmbeddings& embs, std::uint64_t seed,
                          SigmaPolicy sigma, int threads) {
    const ModelDims& d = model.dims();
    plan.validate(d.height, d.width);

    Video video;
    video.frames.reserve(static_cast<std::size_t>(plan.total_frames()));
    for (int j = 0; j < plan.total_frames(); ++j) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        video.frames.push_back(gaussian_frame(rng, d.height, d.width, d.channels));
    }

    int T = sched.steps();
    for (int t = T; t >= 1; --t) {
        std::vector<Video> clips;
        clips.reserve(static_cast<std::size_t>(plan.clip_count));
        for (int i = 0; i < plan.clip_count; ++i) clips.push_back(project_clip(video, plan, i));
        TimeIndex ti(t, T);
        auto stepped = denoise_clips(clips, model, sched, embs, plan, ti, sigma.sigma(sched, t),
                                     derive_seed(seed, 0x6e6f6973ULL ^ static_cast<std::uint64_t>(t)),
                                     threads);
        video = merge_clips(stepped, plan);
    }
    return video;
}

Video generate_frames_independent(const DenoiserModel& model, const NoiseSchedule& sched,
                                  const ClipPlan& plan, const ClipEmbeddings& embs,
                                  std::uint64_t seed, SigmaPolicy sigma) {
    const ModelDims& d = model.dims();
    if (static_cast<int>(embs.items.size()) != plan.clip_count)
        throw std::invalid_argument("generate_frames_independent: need one embedding per clip");

    Video video;
    int T = sched.steps();
    for (int j = 0; j < plan.total_frames(); ++j) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        LatentFrame x = gaussian_frame(rng, d.height, d.width, d.channels);
        const ConditioningEmbedding& emb = embs.items[static_cast<std::size_t>(plan.owner_clip(j))];
        for (int t = T; t >= 1; --t) {
            TimeIndex ti(t, T);
            LatentFrame eps = predict_noise(model, x, ti, emb, j);
            double s = sigma.sigma(sched, t);
            if (s == 0.0) {
                x = ddim_step(x, ti, eps, 0.0, nullptr, sched);
            } else {
                Rng nrng(derive_seed(seed, (static_cast<std::uint64_t>(t) << 32) ^
                                               static_cast<std::uint64_t>(j) ^ 0x6e6f6973ULL));
                LatentFrame extra = gaussian_frame(nrng, x.height(), x.width(), x.channels());
                x = ddim_step(x, ti, eps, s, &extra, sched);
            }
        }
        video.frames.push_back(std::move(x));
    }
    return video;
}

}  // namespace vidtune

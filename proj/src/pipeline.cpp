#include "vidtune/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "vidtune/frame_io.hpp"
#include "vidtune/rng.hpp"

namespace vidtune {

namespace {

using nlohmann::json;

// stream tags for per-stage seed derivation
constexpr std::uint64_t kTagPrincipal = 0x7072696eULL;  // principal trajectory
constexpr std::uint64_t kTagBgBase = 0xb6000000ULL;     // + sample index
constexpr std::uint64_t kTagTune = 0x74756e65ULL;
constexpr std::uint64_t kTagGenerate = 0x67656e65ULL;

void reject_unknown_keys(const json& obj, const std::string& scope,
                         std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("config: unknown key \"" +
                              (scope.empty() ? it.key() : scope + "." + it.key()) + "\"");
    }
}

template <typename T>
T get_field(const json& obj, const std::string& scope, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for \"" + scope + "." + key + "\"");
    }
}

void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw ConfigError("config: invalid \"" + field + "\": " + why);
}

}  // namespace

ModelDims PipelineConfig::model_dims() const {
    ModelDims d;
    d.height = latent.height;
    d.width = latent.width;
    d.channels = latent.channels;
    d.hidden = model.hidden_width;
    d.time_dims = model.time_dims;
    d.pos_dims = model.pos_dims;
    d.h_dims = model.h_dims;
    d.c_dims = model.c_dims;
    return d;
}

PipelineConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");

    reject_unknown_keys(root, "",
                        {"seed", "output_dir", "schedule", "latent", "model", "conditioning",
                         "segmentation", "fusion", "tuning", "temporal"});

    PipelineConfig cfg;
    cfg.seed = get_field<std::uint64_t>(root, "", "seed", cfg.seed);
    cfg.output_dir = get_field<std::string>(root, "", "output_dir", "");
    require(!cfg.output_dir.empty(), "output_dir", "must be set");

    if (root.contains("schedule")) {
        const json& s = root.at("schedule");
        reject_unknown_keys(s, "schedule", {"T", "beta_start", "beta_end"});
        cfg.schedule.T = get_field<int>(s, "schedule", "T", cfg.schedule.T);
        cfg.schedule.beta_start = get_field<double>(s, "schedule", "beta_start", cfg.schedule.beta_start);
        cfg.schedule.beta_end = get_field<double>(s, "schedule", "beta_end", cfg.schedule.beta_end);
    }
    require(cfg.schedule.T >= 1, "schedule.T", "must be >= 1");
    require(cfg.schedule.beta_start > 0.0, "schedule.beta_start", "must be > 0");
    require(cfg.schedule.beta_end < 1.0, "schedule.beta_end", "must be < 1");
    require(cfg.schedule.beta_start <= cfg.schedule.beta_end, "schedule.beta_start",
            "must be <= schedule.beta_end");

    if (root.contains("latent")) {
        const json& l = root.at("latent");
        reject_unknown_keys(l, "latent", {"height", "width", "channels"});
        cfg.latent.height = get_field<int>(l, "latent", "height", cfg.latent.height);
        cfg.latent.width = get_field<int>(l, "latent", "width", cfg.latent.width);
        cfg.latent.channels = get_field<int>(l, "latent", "channels", cfg.latent.channels);
    }
    require(cfg.latent.height >= 1, "latent.height", "must be >= 1");
    require(cfg.latent.width >= 1, "latent.width", "must be >= 1");
    require(cfg.latent.channels >= 1, "latent.channels", "must be >= 1");

    if (root.contains("model")) {
        const json& m = root.at("model");
        reject_unknown_keys(m, "model",
                            {"hidden_width", "time_dims", "pos_dims", "h_dims", "c_dims",
                             "init_seed"});
        cfg.model.hidden_width = get_field<int>(m, "model", "hidden_width", cfg.model.hidden_width);
        cfg.model.time_dims = get_field<int>(m, "model", "time_dims", cfg.model.time_dims);
        cfg.model.pos_dims = get_field<int>(m, "model", "pos_dims", cfg.model.pos_dims);
        cfg.model.h_dims = get_field<int>(m, "model", "h_dims", cfg.model.h_dims);
        cfg.model.c_dims = get_field<int>(m, "model", "c_dims", cfg.model.c_dims);
        cfg.model.init_seed = get_field<std::uint64_t>(m, "model", "init_seed", cfg.model.init_seed);
    }
    require(cfg.model.hidden_width >= 1, "model.hidden_width", "must be >= 1");
    for (auto [v, name] : {std::pair<int, const char*>{cfg.model.time_dims, "model.time_dims"},
                           {cfg.model.pos_dims, "model.pos_dims"},
                           {cfg.model.h_dims, "model.h_dims"},
                           {cfg.model.c_dims, "model.c_dims"}})
        require(v >= 0, name, "must be >= 0");

    if (root.contains("conditioning")) {
        const json& c = root.at("conditioning");
        reject_unknown_keys(c, "conditioning", {"prompt", "condition"});
        cfg.conditioning.prompt = get_field<std::string>(c, "conditioning", "prompt", cfg.conditioning.prompt);
        cfg.conditioning.condition =
            get_field<std::string>(c, "conditioning", "condition", cfg.conditioning.condition);
    }

    if (root.contains("segmentation")) {
        const json& s = root.at("segmentation");
        reject_unknown_keys(s, "segmentation", {"threshold", "mask_file"});
        cfg.segmentation.threshold =
            get_field<double>(s, "segmentation", "threshold", cfg.segmentation.threshold);
        if (s.contains("mask_file") && !s.at("mask_file").is_null())
            cfg.segmentation.mask_file = get_field<std::string>(s, "segmentation", "mask_file", "");
    }
    require(std::isfinite(cfg.segmentation.threshold), "segmentation.threshold", "must be finite");

    if (root.contains("fusion")) {
        const json& f = root.at("fusion");
        reject_unknown_keys(f, "fusion", {"n", "k", "w1", "w2", "eta"});
        cfg.fusion.n = get_field<int>(f, "fusion", "n", cfg.fusion.n);
        cfg.fusion.k = get_field<int>(f, "fusion", "k", cfg.fusion.k);
        cfg.fusion.w1 = get_field<double>(f, "fusion", "w1", cfg.fusion.w1);
        cfg.fusion.w2 = get_field<double>(f, "fusion", "w2", cfg.fusion.w2);
        cfg.fusion.eta = get_field<double>(f, "fusion", "eta", cfg.fusion.eta);
    }
    require(cfg.fusion.n >= 1, "fusion.n", "must be >= 1");
    require(cfg.fusion.k >= 1, "fusion.k", "must be >= 1");
    require(cfg.fusion.k <= cfg.schedule.T, "fusion.k", "must be <= schedule.T");
    require(std::isfinite(cfg.fusion.w1), "fusion.w1", "must be finite");
    require(std::isfinite(cfg.fusion.w2), "fusion.w2", "must be finite");
    require(cfg.fusion.eta >= 0.0 && cfg.fusion.eta <= 1.0, "fusion.eta", "must lie in [0, 1]");

    if (root.contains("tuning")) {
        const json& t = root.at("tuning");
        reject_unknown_keys(t, "tuning",
                            {"lambda1", "lambda2", "lambda3", "learning_rate", "steps",
                             "batch_size"});
        cfg.tuning.lambda1 = get_field<double>(t, "tuning", "lambda1", cfg.tuning.lambda1);
        cfg.tuning.lambda2 = get_field<double>(t, "tuning", "lambda2", cfg.tuning.lambda2);
        cfg.tuning.lambda3 = get_field<double>(t, "tuning", "lambda3", cfg.tuning.lambda3);
        cfg.tuning.learning_rate =
            get_field<double>(t, "tuning", "learning_rate", cfg.tuning.learning_rate);
        cfg.tuning.steps = get_field<int>(t, "tuning", "steps", cfg.tuning.steps);
        cfg.tuning.batch_size = get_field<int>(t, "tuning", "batch_size", cfg.tuning.batch_size);
    }
    for (auto [v, name] : {std::pair<double, const char*>{cfg.tuning.lambda1, "tuning.lambda1"},
                           {cfg.tuning.lambda2, "tuning.lambda2"},
                           {cfg.tuning.lambda3, "tuning.lambda3"}})
        require(std::isfinite(v) && v >= 0.0, name, "must be finite and >= 0");
    require(cfg.tuning.lambda1 + cfg.tuning.lambda2 + cfg.tuning.lambda3 > 0.0, "tuning.lambda1",
            "lambdas must not all be zero");
    require(cfg.tuning.learning_rate > 0.0, "tuning.learning_rate", "must be > 0");
    require(cfg.tuning.steps >= 0, "tuning.steps", "must be >= 0");
    require(cfg.tuning.batch_size >= 1, "tuning.batch_size", "must be >= 1");

    if (root.contains("temporal")) {
        const json& t = root.at("temporal");
        reject_unknown_keys(t, "temporal",
                            {"F", "K", "S", "eta", "clip_weights", "clip_scalars", "prompts"});
        cfg.temporal.F = get_field<int>(t, "temporal", "F", cfg.temporal.F);
        cfg.temporal.K = get_field<int>(t, "temporal", "K", cfg.temporal.K);
        cfg.temporal.S = get_field<int>(t, "temporal", "S", cfg.temporal.S);
        cfg.temporal.eta = get_field<double>(t, "temporal", "eta", cfg.temporal.eta);
        cfg.temporal.clip_weights =
            get_field<std::string>(t, "temporal", "clip_weights", cfg.temporal.clip_weights);
        cfg.temporal.clip_scalars =
            get_field<std::vector<double>>(t, "temporal", "clip_scalars", {});
        cfg.temporal.prompts = get_field<std::vector<std::string>>(t, "temporal", "prompts", {});
    }
    require(cfg.temporal.F >= 1, "temporal.F", "must be >= 1");
    require(cfg.temporal.K >= 1 && cfg.temporal.K <= cfg.temporal.F, "temporal.K",
            "must lie in [1, temporal.F]");
    require(cfg.temporal.S >= 1, "temporal.S", "must be >= 1");
    require((cfg.temporal.F - cfg.temporal.K) % cfg.temporal.S == 0, "temporal.S",
            "clips must tile F exactly: (F - K) must be divisible by S");
    require(cfg.temporal.S <= cfg.temporal.K, "temporal.S",
            "must be <= temporal.K so every frame is covered");
    require(cfg.temporal.eta >= 0.0 && cfg.temporal.eta <= 1.0, "temporal.eta",
            "must lie in [0, 1]");
    require(cfg.temporal.clip_weights == "uniform" || cfg.temporal.clip_weights == "ramp",
            "temporal.clip_weights", "must be \"uniform\" or \"ramp\"");
    int clip_count = (cfg.temporal.F - cfg.temporal.K) / cfg.temporal.S + 1;
    require(cfg.temporal.clip_scalars.empty() ||
                static_cast<int>(cfg.temporal.clip_scalars.size()) == clip_count,
            "temporal.clip_scalars", "must have one entry per clip");
    for (double w : cfg.temporal.clip_scalars)
        require(std::isfinite(w) && w > 0.0, "temporal.clip_scalars", "entries must be > 0");
    require(cfg.temporal.prompts.empty() ||
                static_cast<int>(cfg.temporal.prompts.size()) == clip_count,
            "temporal.prompts", "must have one entry per clip");

    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

namespace {

std::uint64_t effective_seed(const PipelineConfig& cfg, const RunOptions& opts) {
    return opts.seed_override.value_or(cfg.seed);
}

ConditioningEmbedding base_embedding(const PipelineConfig& cfg, const RunOptions& opts) {
    std::uint64_t seed = effective_seed(cfg, opts);
    return ConditioningEmbedding{
        embedding_from_text(cfg.conditioning.prompt, cfg.model.h_dims, seed),
        embedding_from_text(cfg.conditioning.condition, cfg.model.c_dims, seed)};
}

ClipEmbeddings clip_embeddings(const PipelineConfig& cfg, const RunOptions& opts, int clip_count) {
    std::uint64_t seed = effective_seed(cfg, opts);
    std::vector<double> cond = embedding_from_text(cfg.conditioning.condition, cfg.model.c_dims, seed);
    ClipEmbeddings embs;
    embs.items.reserve(static_cast<std::size_t>(clip_count));
    for (int i = 0; i < clip_count; ++i) {
        std::string prompt = cfg.temporal.prompts.empty()
                                 ? cfg.conditioning.prompt + "#" + std::to_string(i)
                                 : cfg.temporal.prompts[static_cast<std::size_t>(i)];
        embs.items.push_back(
            ConditioningEmbedding{embedding_from_text(prompt, cfg.model.h_dims, seed), cond});
    }
    return embs;
}

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
    return cfg.output_dir + "/" + name;
}

MaskPair pipeline_masks(const PipelineConfig& cfg) {
    return load_mask(out_path(cfg, "mask.vtm"), cfg.latent.height, cfg.latent.width);
}

DenoiserModel load_stage_model(const PipelineConfig& cfg, const std::string& name) {
    std::string path = out_path(cfg, name);
    if (!std::filesystem::exists(path))
        throw std::runtime_error("stage input missing: " + path + " (run earlier stages first)");
    DenoiserModel model = load_checkpoint(path);
    if (model.dims() != cfg.model_dims())
        throw ConfigError("config: model dims do not match checkpoint " + path);
    return model;
}

}  // namespace

void stage_setup(const PipelineConfig& cfg, const RunOptions& opts) {
    (void)opts;
    std::filesystem::create_directories(cfg.output_dir);
    DenoiserModel model = init_model(cfg.model_dims(), cfg.model.init_seed);
    save_checkpoint(model, out_path(cfg, "model_init.ckpt"));
}

void stage_fuse(const PipelineConfig& cfg, const RunOptions& opts) {
    DenoiserModel model = load_stage_model(cfg, "model_init.ckpt");
    NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    ConditioningEmbedding emb = base_embedding(cfg, opts);
    std::uint64_t seed = effective_seed(cfg, opts);
    SigmaPolicy sigma{cfg.fusion.eta};

    FusionConfig fcfg{cfg.fusion.n, cfg.fusion.k, cfg.fusion.w1, cfg.fusion.w2};
    fcfg.validate(sched.steps());

    // principal trajectory: r_k for the foreground, continued to r_0 for masks
    std::uint64_t principal_seed = derive_seed(seed, kTagPrincipal);
    LatentFrame r_k = sample_to_step(model, sched, emb, principal_seed, cfg.fusion.k, sigma);
    LatentFrame r0 = resume_denoise(r_k, cfg.fusion.k, model, sched, emb, sigma,
                                    derive_seed(principal_seed, 1));
    if (!r0.all_finite()) throw NumericError("fuse: principal trajectory became nonfinite");
    write_frame(r0, out_path(cfg, "r0.vtfr"));

    MaskPair masks = cfg.segmentation.mask_file
                         ? load_mask(*cfg.segmentation.mask_file, cfg.latent.height, cfg.latent.width)
                         : segment_threshold(r0, cfg.segmentation.threshold);
    save_mask(masks, out_path(cfg, "mask.vtm"));

    std::vector<LatentFrame> bg_samples(static_cast<std::size_t>(cfg.fusion.n),
                                        LatentFrame(1, 1, 1));
    std::vector<std::thread> pool;
    int width = std::max(1, std::min(opts.threads, cfg.fusion.n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= cfg.fusion.n) return;
            bg_samples[static_cast<std::size_t>(i)] =
                sample_to_step(model, sched, emb, derive_seed(seed, kTagBgBase + static_cast<std::uint64_t>(i)),
                               cfg.fusion.k, sigma);
        }
    };
    if (width <= 1) {
        worker();
    } else {
        for (int i = 0; i < width; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (opts.dump_intermediates) {
        write_frame(r_k, out_path(cfg, "r_k_principal.vtfr"));
        for (int i = 0; i < cfg.fusion.n; ++i)
            write_frame(bg_samples[static_cast<std::size_t>(i)],
                        out_path(cfg, "r_k_sample_" + std::to_string(i) + ".vtfr"));
    }

    LatentFrame fused = average_fuse(bg_samples, r_k, masks, fcfg);
    LatentFrame r_prime = resume_denoise(fused, cfg.fusion.k, model, sched, emb, sigma,
                                         derive_seed(principal_seed, 2));
    if (!r_prime.all_finite()) throw NumericError("fuse: fused trajectory became nonfinite");
    write_frame(r_prime, out_path(cfg, "r_prime.vtfr"));
}

void stage_tune(const PipelineConfig& cfg, const RunOptions& opts) {
    DenoiserModel model = load_stage_model(cfg, "model_init.ckpt");
    NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
    ConditioningEmbedding emb = base_embedding(cfg, opts);
    LatentFrame r_prime = read_frame(out_path(cfg, "r_prime.vtfr"));
    MaskPair masks = pipeline_masks(cfg);

    LossWeights weights{cfg.tuning.lambda1, cfg.tuning.lambda2, cfg.tuning.lambda3};
    TuneConfig tcfg{cfg.tuning.steps, cfg.tuning.learning_rate, cfg.tuning.batch_size};
    std::uint64_t seed = derive_seed(effective_seed(cfg, opts), kTagTune);

    try {
        FineTuneResult result = fine_tune(model, {r_prime}, emb, masks, sched, weights, tcfg, seed);
        save_checkpoint(result.model, out_path(cfg, "model_tuned.ckpt"));
        write_training_log(result.log, out_path(cfg, "training_log.tsv"));
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw NumericError(std::string("tune: ") + e.what());
    }
}

void stage_generate(const PipelineConfig& cfg, const RunOptions& opts) {
    DenoiserModel model = load_stage_model(cfg, "model_tuned.ckpt");
    NoiseSchedule sched = build_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);

    ClipPlan plan = make_clip_plan(cfg.temporal.F, cfg.temporal.K, cfg.temporal.S,
                                   cfg.latent.height, cfg.latent.width, cfg.temporal.clip_weights,
                                   cfg.temporal.clip_scalars);
    ClipEmbeddings embs = clip_embeddings(cfg, opts, plan.clip_count);
    std::uint64_t seed = derive_seed(effective_seed(cfg, opts), kTagGenerate);

    Video video = generate_long_video(model, sched, plan, embs, seed,
                                      SigmaPolicy{cfg.temporal.eta}, opts.threads);
    for (const LatentFrame& f : video.frames)
        if (!f.all_finite()) throw NumericError("generate: video became nonfinite");

    VideoManifest manifest{plan.total_frames(), cfg.latent.height, cfg.latent.width,
                           cfg.latent.channels, plan.stride, plan.clip_len, plan.clip_count};
    write_video_dir(video, manifest, out_path(cfg, "video"));

    MaskPair masks = pipeline_masks(cfg);
    ConsistencyReport report = compute_consistency(video, &masks);
    write_report(report, out_path(cfg, "report.json"));
}

void run_stage(const std::string& name, const PipelineConfig& cfg, const RunOptions& opts) {
    if (name == "setup")
        stage_setup(cfg, opts);
    else if (name == "fuse")
        stage_fuse(cfg, opts);
    else if (name == "tune")
        stage_tune(cfg, opts);
    else if (name == "generate")
        stage_generate(cfg, opts);
    else
        throw ConfigError("unknown stage \"" + name + "\" (expected setup, fuse, tune, generate)");
}

void run_pipeline(const PipelineConfig& cfg, const RunOptions& opts) {
    stage_setup(cfg, opts);
    stage_fuse(cfg, opts);
    stage_tune(cfg, opts);
    stage_generate(cfg, opts);
}

ConsistencyReport compute_consistency(const Video& video, const MaskPair* masks) {
    if (video.length() < 2)
        throw std::invalid_argument("compute_consistency: need at least two frames");
    const LatentFrame& first = video.frames[0];
    if (masks != nullptr && !masks->fg.matches_frame(first))
        throw std::invalid_argument("compute_consistency: mask shape mismatch");

    ConsistencyReport rep;
    rep.has_masks = masks != nullptr;
    double fg_count = 0.0, bg_count = 0.0;
    if (masks != nullptr) {
        for (std::size_t i = 0; i < masks->fg.size(); ++i) {
            fg_count += masks->fg[i];
            bg_count += masks->bg[i];
        }
        fg_count *= first.channels();
        bg_count *= first.channels();
    }

    for (int j = 0; j + 1 < video.length(); ++j) {
        const LatentFrame& a = video.frames[static_cast<std::size_t>(j)];
        const LatentFrame& b = video.frames[static_cast<std::size_t>(j + 1)];
        require_same_shape(a, b, "compute_consistency");
        double total = 0.0, fg_total = 0.0, bg_total = 0.0;
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x)
                for (int c = 0; c < a.channels(); ++c) {
                    double d = std::abs(b.at(y, x, c) - a.at(y, x, c));
                    total += d;
                    if (masks != nullptr) {
                        fg_total += masks->fg.at(y, x) * d;
                        bg_total += masks->bg.at(y, x) * d;
                    }
                }
        rep.pair_mean_abs.push_back(total / static_cast<double>(a.size()));
        if (masks != nullptr) {
            rep.fg_pair_mean_abs.push_back(fg_count > 0.0 ? fg_total / fg_count : 0.0);
            rep.bg_pair_mean_abs.push_back(bg_count > 0.0 ? bg_total / bg_count : 0.0);
        }
    }

    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    rep.mean = mean_of(rep.pair_mean_abs);
    rep.max = *std::max_element(rep.pair_mean_abs.begin(), rep.pair_mean_abs.end());
    if (masks != nullptr) {
        rep.fg_mean = mean_of(rep.fg_pair_mean_abs);
        rep.bg_mean = mean_of(rep.bg_pair_mean_abs);
    }
    return rep;
}

std::string report_to_json(const ConsistencyReport& report) {
    json j{{"pair_mean_abs", report.pair_mean_abs},
           {"mean", report.mean},
           {"max", report.max}};
    if (report.has_masks) {
        j["fg"] = {{"pair_mean_abs", report.fg_pair_mean_abs}, {"mean", report.fg_mean}};
        j["bg"] = {{"pair_mean_abs", report.bg_pair_mean_abs}, {"mean", report.bg_mean}};
    }
    return j.dump(2) + "\n";
}

void write_report(const ConsistencyReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("report: cannot open " + path + " for writing");
    os << report_to_json(report);
}

ConsistencyReport report_video_dir(const std::string& video_dir, const std::string& mask_path) {
    Video video = read_video_dir(video_dir);
    if (mask_path.empty()) return compute_consistency(video);
    MaskPair masks = load_mask(mask_path, video.frames[0].height(), video.frames[0].width());
    return compute_consistency(video, &masks);
}

}  // namespace vidtune

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidtune/denoiser.hpp"
#include "vidtune/fusion.hpp"
#include "vidtune/segmentation.hpp"
#include "vidtune/temporal.hpp"
#include "vidtune/tuning.hpp"

namespace vidtune {

/// Config file problem; the message names the offending field. CLI exit 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Nonfinite values or other numeric breakdown mid-run. CLI exit 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string output_dir;

    struct {
        int T = 50;
        double beta_start = 8.5e-4;
        double beta_end = 1.2e-2;
    } schedule;

    struct {
        int height = 8;
        int width = 8;
        int channels = 1;
    } latent;

    struct {
        int hidden_width = 32;
        int time_dims = 8;
        int pos_dims = 8;
        int h_dims = 8;
        int c_dims = 8;
        std::uint64_t init_seed = 0;
    } model;

    struct {
        std::string prompt = "prompt";
        std::string condition = "condition";
    } conditioning;

    struct {
        double threshold = 0.0;
        std::optional<std::string> mask_file;
    } segmentation;

    struct {
        int n = 5;
        int k = 45;
        double w1 = 1.0;
        double w2 = 1.0;
        double eta = 0.0;
    } fusion;

    struct {
        double lambda1 = 1.0;
        double lambda2 = 1.0;
        double lambda3 = 1.0;
        double learning_rate = 2e-6;
        int steps = 250;
        int batch_size = 1;
    } tuning;

    struct {
        int F = 6;
        int K = 4;
        int S = 2;
        double eta = 0.0;
        std::string clip_weights = "uniform";
        std::vector<double> clip_scalars;
        std::vector<std::string> prompts;
    } temporal;

    ModelDims model_dims() const;
};

/// Strict parse: unknown keys are rejected, cross-field rules checked;
/// failures throw ConfigError naming the field (e.g. "fusion.k").
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

struct RunOptions {
    int threads = 1;
    bool dump_intermediates = false;
    std::optional<std::uint64_t> seed_override;
};

/// Adjacent-frame difference metrics; fg/bg rows present when masks given.
struct ConsistencyReport {
    std::vector<double> pair_mean_abs;  // length F - 1
    double mean = 0.0;
    double max = 0.0;
    std::vector<double> fg_pair_mean_abs;
    double fg_mean = 0.0;
    std::vector<double> bg_pair_mean_abs;
    double bg_mean = 0.0;
    bool has_masks = false;
};

ConsistencyReport compute_consistency(const Video& video, const MaskPair* masks = nullptr);
std::string report_to_json(const ConsistencyReport& report);
void write_report(const ConsistencyReport& report, const std::string& path);

/// Stages in order: setup, fuse, tune, generate. Each persists its outputs
/// under config.output_dir so later stages can restart from disk.
void stage_setup(const PipelineConfig& cfg, const RunOptions& opts);
void stage_fuse(const PipelineConfig& cfg, const RunOptions& opts);
void stage_tune(const PipelineConfig& cfg, const RunOptions& opts);
void stage_generate(const PipelineConfig& cfg, const RunOptions& opts);

void run_stage(const std::string& name, const PipelineConfig& cfg, const RunOptions& opts);
void run_pipeline(const PipelineConfig& cfg, const RunOptions& opts);

/// Report over a persisted video directory; uses mask_path when nonempty.
ConsistencyReport report_video_dir(const std::string& video_dir, const std::string& mask_path = "");

}  // namespace vidtune

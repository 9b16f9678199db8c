#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vidtune/pipeline.hpp"

namespace {

// exit codes: 0 ok, 2 config error, 3 numeric abort, 1 anything else
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const vidtune::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const vidtune::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-tuned video generation pipeline"};
    app.require_subcommand(1);

    int threads = 1;
    bool dump_intermediates = false;
    std::optional<std::uint64_t> seed_override;
    app.add_option("--threads", threads, "worker threads for sampling and clip denoising")
        ->check(CLI::PositiveNumber);
    app.add_flag("--dump-intermediates", dump_intermediates,
                 "persist per-trajectory latents during fusion");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed-override", seed_value, "replace the config seed");

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "run all pipeline stages");
    run_cmd->add_option("config", config_path, "pipeline config file")->required();

    std::string stage_name;
    auto* stage_cmd = app.add_subcommand("stage", "run one stage from persisted state");
    stage_cmd->add_option("name", stage_name, "setup, fuse, tune or generate")->required();
    stage_cmd->add_option("config", config_path, "pipeline config file")->required();

    std::string video_dir, mask_path;
    auto* report_cmd = app.add_subcommand("report", "consistency report for a video directory");
    report_cmd->add_option("video-dir", video_dir, "directory with manifest.json and frames")
        ->required();
    report_cmd->add_option("--mask", mask_path, "mask file for a fg/bg breakdown");

    CLI11_PARSE(app, argc, argv);

    vidtune::RunOptions opts;
    opts.threads = threads;
    opts.dump_intermediates = dump_intermediates;
    if (*seed_opt) opts.seed_override = seed_value;

    if (run_cmd->parsed())
        return guarded([&] {
            vidtune::run_pipeline(vidtune::load_config(config_path), opts);
            std::printf("pipeline complete\n");
        });
    if (stage_cmd->parsed())
        return guarded([&] {
            vidtune::run_stage(stage_name, vidtune::load_config(config_path), opts);
            std::printf("stage %s complete\n", stage_name.c_str());
        });
    return guarded([&] {
        auto report = vidtune::report_video_dir(video_dir, mask_path);
        std::fputs(vidtune::report_to_json(report).c_str(), stdout);
    });
}

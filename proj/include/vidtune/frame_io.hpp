#pragma once

#include <string>

#include "vidtune/frame.hpp"
#include "vidtune/temporal.hpp"

namespace vidtune {

/// Frame file: magic "VTFR", u16 version, u32 height/width/channels, then
/// height * width * channels float64 values, all little-endian, row-major
/// with channel innermost. write_frame also drops an 8-bit grayscale preview
/// next to the file at <path>.pgm. Round trips are bit-exact.
void write_frame(const LatentFrame& frame, const std::string& path);
LatentFrame read_frame(const std::string& path);

/// P5 PGM of the channel-mean image, min-max scaled to 0..255 (constant
/// frames map to 0).
void write_preview_pgm(const LatentFrame& frame, const std::string& path);

/// Video directory: manifest.json plus frame_NNNNNN.vtfr (and previews).
struct VideoManifest {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    int stride = 0;
    int clip_len = 0;
    int clip_count = 0;
};

void write_video_dir(const Video& video, const VideoManifest& manifest, const std::string& dir);
Video read_video_dir(const std::string& dir, VideoManifest* manifest_out = nullptr);

}  // namespace vidtune

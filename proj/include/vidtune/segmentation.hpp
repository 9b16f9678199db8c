#pragma once

#include <string>

#include "vidtune/frame.hpp"

namespace vidtune {

/// Complementary binary foreground/background grids: fg + bg == 1 per pixel.
struct MaskPair {
    PixelGrid fg;
    PixelGrid bg;

    MaskPair() = default;
    MaskPair(PixelGrid fg_, PixelGrid bg_);

    static MaskPair from_foreground(PixelGrid fg);
};

/// Threshold segmenter: foreground is every pixel whose channel-mean
/// intensity exceeds the threshold.
MaskPair segment_threshold(const LatentFrame& frame, double threshold);

/// Elementwise product, mask broadcast across channels.
LatentFrame apply_mask(const LatentFrame& frame, const PixelGrid& mask);

/// Mask file: ASCII line "VTMASK <width> <height>\n" followed by
/// height * width foreground bytes (0x00 / 0x01), row-major. Background is
/// derived as the complement on load.
void save_mask(const MaskPair& masks, const std::string& path);
MaskPair load_mask(const std::string& path, int expect_height = -1, int expect_width = -1);

}  // namespace vidtune

#include "vidtune/segmentation.hpp"

#include <fstream>
#include <sstream>

namespace vidtune {

MaskPair::MaskPair(PixelGrid fg_, PixelGrid bg_) : fg(std::move(fg_)), bg(std::move(bg_)) {
    if (!fg.same_shape(bg))
        throw std::invalid_argument("MaskPair: fg/bg shape mismatch");
    for (std::size_t i = 0; i < fg.size(); ++i) {
        bool ok = (fg[i] == 0.0 || fg[i] == 1.0) && fg[i] + bg[i] == 1.0;
        if (!ok)
            throw std::invalid_argument("MaskPair: masks must be binary and complementary");
    }
}

MaskPair MaskPair::from_foreground(PixelGrid fg) {
    PixelGrid bg(fg.height(), fg.width());
    for (std::size_t i = 0; i < fg.size(); ++i) {
        if (fg[i] != 0.0 && fg[i] != 1.0)
            throw std::invalid_argument("MaskPair: foreground must be binary");
        bg[i] = 1.0 - fg[i];
    }
    return MaskPair{std::move(fg), std::move(bg)};
}

MaskPair segment_threshold(const LatentFrame& frame, double threshold) {
    if (!frame.all_finite())
        throw std::invalid_argument("segment_threshold: frame must be finite");
    PixelGrid fg(frame.height(), frame.width());
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x) {
            double mean = 0.0;
            for (int c = 0; c < frame.channels(); ++c) mean += frame.at(y, x, c);
            mean /= frame.channels();
            fg.at(y, x) = mean > threshold ? 1.0 : 0.0;
        }
    return MaskPair::from_foreground(std::move(fg));
}

LatentFrame apply_mask(const LatentFrame& frame, const PixelGrid& mask) {
    if (!mask.matches_frame(frame))
        throw std::invalid_argument("apply_mask: mask shape mismatch");
    LatentFrame out(frame.height(), frame.width(), frame.channels());
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x) {
            double m = mask.at(y, x);
            for (int c = 0; c < frame.channels(); ++c)
                out.at(y, x, c) = m * frame.at(y, x, c);
        }
    return out;
}

void save_mask(const MaskPair& masks, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mask: cannot open " + path + " for writing");
    os << "VTMASK " << masks.fg.width() << " " << masks.fg.height() << "\n";
    for (int y = 0; y < masks.fg.height(); ++y)
        for (int x = 0; x < masks.fg.width(); ++x) {
            char b = masks.fg.at(y, x) != 0.0 ? 1 : 0;
            os.write(&b, 1);
        }
    if (!os) throw std::runtime_error("mask: write failed for " + path);
}

MaskPair load_mask(const std::string& path, int expect_height, int expect_width) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("mask: cannot open " + path);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::string tag;
    int width = 0, height = 0;
    if (!(hs >> tag >> width >> height) || tag != "VTMASK" || width <= 0 || height <= 0)
        throw std::runtime_error("mask: malformed header in " + path);
    if ((expect_height >= 0 && height != expect_height) ||
        (expect_width >= 0 && width != expect_width))
        throw std::runtime_error("mask: dimensions in " + path + " do not match expected shape");

    PixelGrid fg(height, width);
    std::vector<char> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        is.read(row.data(), width);
        if (!is) throw std::runtime_error("mask: truncated payload in " + path);
        for (int x = 0; x < width; ++x) {
            if (row[x] != 0 && row[x] != 1)
                throw std::runtime_error("mask: non-binary byte in " + path);
            fg.at(y, x) = row[x];
        }
    }
    return MaskPair::from_foreground(std::move(fg));
}

}  // namespace vidtune
